use std::net::{TcpListener, TcpStream};
use std::sync::Arc;

use tungstenite::{connect, Message, WebSocket};

use blindtrack::attack::{run_attack, AttackSpec, Variant};
use blindtrack::model::{UiModel, Value};
use blindtrack::service::{decode_server, encode_client, log_from_frames, serve, ClientMsg, Registry, ServeOptions, ServerMsg};
use blindtrack::trace::{generate, InputEvent, Task, UserProfile};

type Ws = WebSocket<tungstenite::stream::MaybeTlsStream<TcpStream>>;

fn start(debug: bool) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || serve(listener, Registry::bundled(), ServeOptions { debug, realtime: false }));
    format!("ws://{addr}/")
}

fn send(ws: &mut Ws, m: &ClientMsg) {
    ws.send(Message::text(encode_client(m))).unwrap();
}

fn recv(ws: &mut Ws) -> ServerMsg {
    loop {
        match ws.read().unwrap() {
            Message::Text(t) => return decode_server(&t).unwrap(),
            Message::Close(_) => panic!("socket closed"),
            _ => {}
        }
    }
}

/// Frames up to and including the outcome.
fn drain_until_outcome(ws: &mut Ws) -> Vec<ServerMsg> {
    let mut out = Vec::new();
    loop {
        let m = recv(ws);
        let done = matches!(m, ServerMsg::Outcome { .. });
        out.push(m);
        if done {
            return out;
        }
    }
}

#[test]
fn attack_over_websocket_matches_library() {
    let url = start(false);
    let model = Arc::new(UiModel::pacemaker());
    let spec = AttackSpec::new(Variant::ConfirmationDriven, "rate", Value::Number(150.0)).with_interval(125);
    let mut checked_launch = false;
    for seed in 5000..5004 {
        let tr = generate(&model, &UserProfile::default(), &Task::pacemaker(), seed).unwrap();
        let want = run_attack(&model, &tr, &spec, Default::default(), None).unwrap();
        let (mut ws, _) = connect(&url).unwrap();
        send(&mut ws, &ClientMsg::Open { model: "pacemaker".into(), spec: Some(spec.clone()), config: None });
        match recv(&mut ws) {
            ServerMsg::Open { target_state, screen, .. } => {
                assert_eq!(target_state.as_deref(), Some("program"));
                assert_eq!(screen, (model.screen_width, model.screen_height));
            }
            m => panic!("expected open, got {m:?}"),
        }
        for (seq, e) in tr.events.iter().enumerate() {
            send(&mut ws, &ClientMsg::Event { seq: seq as u64, event: *e });
        }
        send(&mut ws, &ClientMsg::Close);
        let frames = drain_until_outcome(&mut ws);
        assert_eq!(log_from_frames(&frames), want.log(), "seed {seed}");
        let Some(ServerMsg::Outcome { outcome, decisions, .. }) = frames.last() else { unreachable!() };
        assert_eq!(outcome.as_ref(), Some(&want.outcome));
        assert_eq!(*decisions, want.decisions.len());
        checked_launch |= want.outcome.launched;
    }
    assert!(checked_launch, "no launched attack among the sampled traces");
}

#[test]
fn faults_are_reported() {
    let url = start(false);
    let (mut ws, _) = connect(&url).unwrap();
    send(&mut ws, &ClientMsg::Event { seq: 0, event: InputEvent::mv(0, 1, 1) });
    match recv(&mut ws) {
        ServerMsg::Fault { fatal, message } => {
            assert!(fatal);
            assert!(message.contains("before open"), "{message}");
        }
        m => panic!("expected fault, got {m:?}"),
    }

    let (mut ws, _) = connect(&url).unwrap();
    ws.send(Message::text(r#"{"proto":2,"type":"close"}"#)).unwrap();
    assert!(matches!(recv(&mut ws), ServerMsg::Fault { fatal: true, .. }));

    let (mut ws, _) = connect(&url).unwrap();
    send(&mut ws, &ClientMsg::Open { model: "pacemaker".into(), spec: None, config: None });
    assert!(matches!(recv(&mut ws), ServerMsg::Open { target_state: None, .. }));
    send(&mut ws, &ClientMsg::Debug);
    assert!(matches!(recv(&mut ws), ServerMsg::Fault { fatal: false, .. }));
    send(&mut ws, &ClientMsg::Event { seq: 0, event: InputEvent::mv(10, 2, 2) });
    match recv(&mut ws) {
        ServerMsg::Apply { seq: 0, events, log } => {
            assert_eq!(events, vec![InputEvent::mv(10, 2, 2)]);
            assert_eq!(log, vec!["PASS 10 move 2 2".to_string()]);
        }
        m => panic!("expected apply, got {m:?}"),
    }
    send(&mut ws, &ClientMsg::Event { seq: 5, event: InputEvent::mv(20, 2, 2) });
    assert!(matches!(recv(&mut ws), ServerMsg::Fault { fatal: true, .. }));
}

#[test]
fn debug_view_when_enabled() {
    let url = start(true);
    let (mut ws, _) = connect(&url).unwrap();
    send(&mut ws, &ClientMsg::Open { model: "pacemaker".into(), spec: None, config: None });
    recv(&mut ws);
    send(&mut ws, &ClientMsg::Debug);
    match recv(&mut ws) {
        ServerMsg::Debug(v) => {
            assert_eq!(v.top_state, "home");
            assert!((v.state_probs.values().sum::<f64>() - 1.0).abs() < 1e-9);
            assert_eq!(v.snapshot.trackers.len(), 1);
        }
        m => panic!("expected debug, got {m:?}"),
    }
}
