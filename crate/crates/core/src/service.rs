//! Interposer sessions over a web-socket: JSON text frames, schema
//! `proto: 1`, message kinds `open`, `event`, `apply`, `debug`, `fault`,
//! `outcome` (plus the client's `close`). See `docs/protocol.md`.

use std::collections::BTreeMap;
use std::fs;
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use tungstenite::{Message, WebSocket};

use crate::attack::{score, AttackOutcome, AttackSpec, InterposerDecision, Session};
use crate::error::{AttackError, ModelError};
use crate::estimator::{Estimator, EstimatorConfig, EstimatorSnapshot};
use crate::geometry::Rect;
use crate::model::{load_model, UiModel, Value};
use crate::terminal::TerminalState;
use crate::trace::InputEvent;

pub const PROTO: u32 = 1;
/// Longest single pause used to pace injected frames in real time.
const MAX_PACE_MS: u64 = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMsg {
    Open {
        model: String,
        #[serde(default)]
        spec: Option<AttackSpec>,
        #[serde(default)]
        config: Option<EstimatorConfig>,
    },
    Event {
        seq: u64,
        event: InputEvent,
    },
    Debug,
    Close,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebugView {
    pub state_probs: BTreeMap<String, f64>,
    pub top_state: String,
    pub top_prob: f64,
    pub combined_region: Vec<Rect>,
    pub snapshot: EstimatorSnapshot,
}

/// The server oracle's final terminal state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleView {
    pub state: String,
    pub cursor: (i32, i32),
    pub values: BTreeMap<String, Value>,
    pub committed: BTreeMap<String, Value>,
}

impl From<&TerminalState> for OracleView {
    fn from(t: &TerminalState) -> Self {
        Self {
            state: t.state.clone(),
            cursor: (t.cursor.x, t.cursor.y),
            values: t.values.clone(),
            committed: t.committed.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMsg {
    Open {
        session: String,
        model: String,
        screen: (i32, i32),
        target_state: Option<String>,
    },
    /// Events the terminal must execute, in order, with the decision log
    /// lines that produced them.
    Apply {
        seq: u64,
        events: Vec<InputEvent>,
        log: Vec<String>,
    },
    Debug(Box<DebugView>),
    Fault {
        message: String,
        fatal: bool,
    },
    Outcome {
        outcome: Option<AttackOutcome>,
        oracle: OracleView,
        decisions: usize,
    },
}

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    proto: u32,
    #[serde(flatten)]
    msg: T,
}

pub fn encode(msg: &ServerMsg) -> String {
    serde_json::to_string(&Envelope { proto: PROTO, msg }).expect("server message serializes")
}

pub fn encode_client(msg: &ClientMsg) -> String {
    serde_json::to_string(&Envelope { proto: PROTO, msg }).expect("client message serializes")
}

pub fn decode_client(text: &str) -> Result<ClientMsg, String> {
    let v: serde_json::Value = serde_json::from_str(text).map_err(|e| format!("malformed frame: {e}"))?;
    match v.get("proto").and_then(|p| p.as_u64()) {
        Some(p) if p == PROTO as u64 => {}
        Some(p) => return Err(format!("unsupported proto {p}")),
        None => return Err("missing proto".into()),
    }
    let env: Envelope<ClientMsg> = serde_json::from_value(v).map_err(|e| format!("malformed frame: {e}"))?;
    Ok(env.msg)
}

pub fn decode_server(text: &str) -> Result<ServerMsg, String> {
    let env: Envelope<ServerMsg> = serde_json::from_str(text).map_err(|e| format!("malformed frame: {e}"))?;
    Ok(env.msg)
}

/// Models a server can open sessions on, by name.
#[derive(Debug, Clone, Default)]
pub struct Registry {
    models: BTreeMap<String, Arc<UiModel>>,
}

impl Registry {
    /// The bundled model only.
    pub fn bundled() -> Self {
        let mut r = Self::default();
        r.insert_as("pacemaker", UiModel::pacemaker());
        r
    }

    /// Registers a model under its `name`, or `fallback` when unnamed.
    pub fn insert_as(&mut self, fallback: &str, model: UiModel) {
        let name = model.name.clone().unwrap_or_else(|| fallback.to_string());
        self.models.insert(name, Arc::new(model));
    }

    /// Bundled model plus every `*.model` file in `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, ModelError> {
        let mut r = Self::bundled();
        let entries = fs::read_dir(dir).map_err(|e| ModelError::Syntax(format!("{}: {e}", dir.display())))?;
        let mut paths: Vec<_> = entries.filter_map(|e| e.ok()).map(|e| e.path()).collect();
        paths.sort();
        for p in paths.iter().filter(|p| p.extension().is_some_and(|x| x == "model")) {
            let text = fs::read_to_string(p).map_err(|e| ModelError::Syntax(format!("{}: {e}", p.display())))?;
            let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            r.insert_as(&stem, load_model(&text)?);
        }
        Ok(r)
    }

    pub fn get(&self, name: &str) -> Option<&Arc<UiModel>> {
        self.models.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.models.keys().map(String::as_str)
    }
}

enum Inner {
    Attack(Box<Session>),
    Observe(Box<Estimator>),
}

struct Open {
    model: Arc<UiModel>,
    spec: Option<AttackSpec>,
    inner: Inner,
    next_seq: u64,
    decisions: Vec<InterposerDecision>,
}

/// One connection's protocol state, independent of the transport.
pub struct ServiceSession {
    id: String,
    registry: Arc<Registry>,
    debug: bool,
    open: Option<Open>,
    closed: bool,
}

impl ServiceSession {
    pub fn new(id: impl Into<String>, registry: Arc<Registry>, debug: bool) -> Self {
        Self { id: id.into(), registry, debug, open: None, closed: false }
    }

    /// The session has ended (outcome sent or fatal fault).
    pub fn is_closed(&self) -> bool {
        self.closed
    }

    fn fault(&mut self, message: impl Into<String>, fatal: bool) -> Vec<ServerMsg> {
        self.closed |= fatal;
        vec![ServerMsg::Fault { message: message.into(), fatal }]
    }

    /// Handles one text frame and returns the frames to send back.
    pub fn handle_text(&mut self, text: &str) -> Vec<ServerMsg> {
        match decode_client(text) {
            Ok(msg) => self.handle(msg),
            Err(e) => self.fault(e, true),
        }
    }

    pub fn handle(&mut self, msg: ClientMsg) -> Vec<ServerMsg> {
        if self.closed {
            return self.fault("session is closed", true);
        }
        match msg {
            ClientMsg::Open { model, spec, config } => self.on_open(&model, spec, config.unwrap_or_default()),
            ClientMsg::Event { seq, event } => self.on_event(seq, event),
            ClientMsg::Debug => self.on_debug(),
            ClientMsg::Close => self.on_close(),
        }
    }

    fn on_open(&mut self, name: &str, spec: Option<AttackSpec>, cfg: EstimatorConfig) -> Vec<ServerMsg> {
        if self.open.is_some() {
            return self.fault("session already open", true);
        }
        let Some(model) = self.registry.get(name).cloned() else {
            return self.fault(format!("unknown model `{name}`"), true);
        };
        let inner = match &spec {
            Some(s) => Session::new(model.clone(), s.clone(), cfg).map(|s| Inner::Attack(Box::new(s))),
            None => Estimator::init_known(model.clone(), &model.start_state, None, cfg)
                .map(|e| Inner::Observe(Box::new(e)))
                .map_err(AttackError::from),
        };
        let inner = match inner {
            Ok(i) => i,
            Err(e) => return self.fault(e.to_string(), true),
        };
        let target_state = match &inner {
            Inner::Attack(s) => Some(s.target().state.clone()),
            Inner::Observe(_) => None,
        };
        let screen = (model.screen_width, model.screen_height);
        self.open = Some(Open { model, spec, inner, next_seq: 0, decisions: Vec::new() });
        vec![ServerMsg::Open { session: self.id.clone(), model: name.to_string(), screen, target_state }]
    }

    fn on_event(&mut self, seq: u64, e: InputEvent) -> Vec<ServerMsg> {
        let Some(open) = &mut self.open else {
            return self.fault("event before open", true);
        };
        if seq != open.next_seq {
            let msg = format!("out-of-order event: expected seq {}, got {seq}", open.next_seq);
            return self.fault(msg, true);
        }
        open.next_seq += 1;
        let decisions = match &mut open.inner {
            Inner::Attack(s) => s.interpose(&e),
            Inner::Observe(est) => est.observe(&e).map(|_| vec![InterposerDecision::Pass(e)]).or_else(|err| match err {
                crate::error::EstimatorError::TooManyTrackers { .. } => {
                    est.collapse();
                    Ok(vec![InterposerDecision::Pass(e)])
                }
                err => Err(err.into()),
            }),
        };
        match decisions {
            Ok(ds) => {
                let frames = apply_frames(seq, &ds);
                open.decisions.extend(ds);
                frames
            }
            Err(err) => self.fault(err.to_string(), true),
        }
    }

    fn on_debug(&mut self) -> Vec<ServerMsg> {
        if !self.debug {
            return self.fault("debug is disabled on this server", false);
        }
        let Some(open) = &self.open else {
            return self.fault("debug before open", false);
        };
        let est = match &open.inner {
            Inner::Attack(s) => s.estimator(),
            Inner::Observe(e) => e,
        };
        let m = &open.model;
        let estimate = est.estimate();
        let view = DebugView {
            state_probs: m.states.iter().zip(&estimate.state_probs).map(|(s, p)| (s.id.clone(), *p)).collect(),
            top_state: m.states[estimate.top_state].id.clone(),
            top_prob: estimate.top_prob,
            combined_region: estimate.combined_region.rects(),
            snapshot: est.snapshot(),
        };
        vec![ServerMsg::Debug(Box::new(view))]
    }

    fn on_close(&mut self) -> Vec<ServerMsg> {
        let Some(mut open) = self.open.take() else {
            return self.fault("close before open", true);
        };
        let mut out = Vec::new();
        let launched = match &mut open.inner {
            Inner::Attack(s) => match s.finish() {
                Ok(ds) => {
                    out.extend(apply_frames(open.next_seq, &ds));
                    open.decisions.extend(ds);
                    s.launched()
                }
                Err(e) => return self.fault(e.to_string(), true),
            },
            Inner::Observe(_) => false,
        };
        let mut oracle = TerminalState::boot(&open.model);
        for e in open.decisions.iter().flat_map(InterposerDecision::delivered) {
            oracle.apply(&open.model, &e);
        }
        let outcome = open.spec.as_ref().map(|spec| score(&open.model, spec, &open.decisions, launched, None));
        out.push(ServerMsg::Outcome { outcome, oracle: OracleView::from(&oracle), decisions: open.decisions.len() });
        self.closed = true;
        out
    }
}

/// One `apply` frame per decision, and one per event inside an injection
/// so the transport can pace them.
pub fn apply_frames(seq: u64, decisions: &[InterposerDecision]) -> Vec<ServerMsg> {
    let mut out = Vec::new();
    for d in decisions {
        match d {
            InterposerDecision::Inject(es) => {
                for e in es {
                    let log = InterposerDecision::Inject(vec![*e]).log_lines();
                    out.push(ServerMsg::Apply { seq, events: vec![*e], log });
                }
            }
            d => out.push(ServerMsg::Apply { seq, events: d.delivered(), log: d.log_lines() }),
        }
    }
    out
}

/// Decision log lines carried by a sequence of server frames.
pub fn log_from_frames<'a>(frames: impl IntoIterator<Item = &'a ServerMsg>) -> String {
    let mut s = String::new();
    for f in frames {
        if let ServerMsg::Apply { log, .. } = f {
            for line in log {
                s.push_str(line);
                s.push('\n');
            }
        }
    }
    s
}

#[derive(Debug, Clone, Copy)]
pub struct ServeOptions {
    pub debug: bool,
    /// Pause between injected frames by their timestamp gaps.
    pub realtime: bool,
}

/// Accepts connections forever, one thread per session.
pub fn serve(listener: TcpListener, registry: Registry, opts: ServeOptions) -> std::io::Result<()> {
    let registry = Arc::new(registry);
    let ids = Arc::new(AtomicU64::new(1));
    for stream in listener.incoming() {
        let stream = stream?;
        let registry = registry.clone();
        let id = format!("s{}", ids.fetch_add(1, Ordering::Relaxed));
        std::thread::spawn(move || {
            let _ = run_connection(stream, ServiceSession::new(id, registry, opts.debug), opts);
        });
    }
    Ok(())
}

fn run_connection(stream: TcpStream, mut session: ServiceSession, opts: ServeOptions) -> Result<(), tungstenite::Error> {
    let mut ws: WebSocket<TcpStream> = tungstenite::accept(stream).map_err(|e| match e {
        tungstenite::HandshakeError::Failure(e) => e,
        tungstenite::HandshakeError::Interrupted(_) => tungstenite::Error::ConnectionClosed,
    })?;
    let mut last_t: Option<u64> = None;
    while !session.is_closed() {
        let frames = match ws.read()? {
            Message::Text(t) => session.handle_text(&t),
            Message::Binary(_) => session.handle_text("\u{0}"),
            Message::Close(_) => break,
            _ => continue,
        };
        for f in frames {
            if let (true, ServerMsg::Apply { events, log, .. }) = (opts.realtime, &f) {
                let injected = log.first().is_some_and(|l| l.starts_with("INJECT"));
                if let (true, Some(e), Some(prev)) = (injected, events.first(), last_t) {
                    let gap = e.t_ms.saturating_sub(prev).min(MAX_PACE_MS);
                    std::thread::sleep(Duration::from_millis(gap));
                }
                if let Some(e) = events.last() {
                    last_t = Some(e.t_ms);
                }
            }
            ws.send(Message::text(encode(&f)))?;
        }
    }
    let _ = ws.close(None);
    let _ = ws.flush();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::Variant;

    fn session(debug: bool) -> ServiceSession {
        ServiceSession::new("t", Arc::new(Registry::bundled()), debug)
    }

    #[test]
    fn event_before_open_faults() {
        let mut s = session(false);
        let out = s.handle(ClientMsg::Event { seq: 0, event: InputEvent::mv(0, 1, 1) });
        assert!(matches!(&out[..], [ServerMsg::Fault { fatal: true, .. }]));
        assert!(s.is_closed());
    }

    #[test]
    fn debug_refused_without_flag() {
        let mut s = session(false);
        s.handle(ClientMsg::Open { model: "pacemaker".into(), spec: None, config: None });
        let out = s.handle(ClientMsg::Debug);
        assert!(matches!(&out[..], [ServerMsg::Fault { fatal: false, .. }]));
        assert!(!s.is_closed());
        let mut s = session(true);
        s.handle(ClientMsg::Open { model: "pacemaker".into(), spec: None, config: None });
        assert!(matches!(&s.handle(ClientMsg::Debug)[..], [ServerMsg::Debug(_)]));
    }

    #[test]
    fn out_of_order_and_malformed_fault() {
        let mut s = session(false);
        s.handle(ClientMsg::Open { model: "pacemaker".into(), spec: None, config: None });
        let out = s.handle(ClientMsg::Event { seq: 3, event: InputEvent::mv(0, 1, 1) });
        assert!(matches!(&out[..], [ServerMsg::Fault { fatal: true, .. }]));
        let mut s = session(false);
        assert!(matches!(&s.handle_text("{\"type\":\"open\"}")[..], [ServerMsg::Fault { fatal: true, .. }]));
        let mut s = session(false);
        assert!(matches!(&s.handle_text("{\"proto\":2,\"type\":\"debug\"}")[..], [ServerMsg::Fault { .. }]));
    }

    #[test]
    fn frames_round_trip() {
        let spec = AttackSpec::new(Variant::ConfirmationDriven, "rate", Value::Number(150.0));
        let msg = ClientMsg::Open { model: "pacemaker".into(), spec: Some(spec), config: None };
        assert_eq!(decode_client(&encode_client(&msg)).unwrap(), msg);
        let msg = ClientMsg::Event { seq: 4, event: InputEvent::mv(120, -3, 2) };
        let text = encode_client(&msg);
        assert_eq!(text, r#"{"proto":1,"type":"event","seq":4,"event":{"t_ms":120,"type":"move","dx":-3,"dy":2}}"#);
        let apply = ServerMsg::Apply { seq: 4, events: vec![InputEvent::mv(120, -3, 2)], log: vec!["PASS 120 move -3 2".into()] };
        assert_eq!(decode_server(&encode(&apply)).unwrap(), apply);
    }
}
