//! C ABI over the blindtrack estimator and interposer.
//!
//! Handles are opaque and owned by the caller, who frees them with the
//! matching `*_free`. Every fallible call returns a [`BtStatus`]; on failure
//! the message is kept per thread and read with [`bt_last_error`].
//!
//! Strings in are NUL-terminated UTF-8. Strings out are copied into a caller
//! buffer: pass `buf = NULL, cap = 0` to learn the size (including the NUL)
//! through `needed`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::collections::VecDeque;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use blindtrack::attack::{AttackSpec, InterposerDecision, Session};
use blindtrack::estimator::{Estimator, EstimatorConfig};
use blindtrack::model::{load_model, UiModel};
use blindtrack::trace::{InputEvent, KeyCode, Payload};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BtStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    /// Malformed model, config, spec or event text.
    Parse = 3,
    /// Well-formed input the model or estimator rejects.
    Invalid = 4,
    Io = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BtEventKind {
    Move = 0,
    Down = 1,
    Up = 2,
    Key = 3,
    TouchDown = 4,
    TouchMove = 5,
    TouchUp = 6,
    Boot = 7,
}

/// Named keys; `Char` means the key is `BtEvent::codepoint`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BtKey {
    Char = 0,
    Backspace,
    Delete,
    Enter,
    Tab,
    Escape,
    Left,
    Right,
    Up,
    Down,
    Home,
    End,
    SelectAll,
}

/// One input event. `x`/`y` are the delta for `Move` and the absolute
/// position for touch events; unused fields are ignored.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct BtEvent {
    pub t_ms: u64,
    pub kind: BtEventKind,
    pub x: i32,
    pub y: i32,
    pub key: BtKey,
    pub codepoint: u32,
}

pub struct BtModel(Arc<UiModel>);

pub struct BtEstimator(Estimator);

pub struct BtSession {
    inner: Session,
    pending: VecDeque<InputEvent>,
    log: String,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

struct Fail(BtStatus, String);

impl Fail {
    fn null(what: &str) -> Self {
        Fail(BtStatus::NullArgument, format!("`{what}` is null"))
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> BtStatus {
    let r = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| p.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "panic".into());
        Err(Fail(BtStatus::Panic, msg))
    });
    match r {
        Ok(()) => BtStatus::Ok,
        Err(Fail(code, msg)) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = msg);
            code
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|e| Fail(BtStatus::InvalidUtf8, format!("`{what}`: {e}")))
}

unsafe fn opt_str_arg<'a>(p: *const c_char, what: &str) -> Result<Option<&'a str>, Fail> {
    if p.is_null() {
        Ok(None)
    } else {
        str_arg(p, what).map(Some)
    }
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| Fail::null(what))
}

unsafe fn handle_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| Fail::null(what))
}

unsafe fn put<T>(out: *mut T, v: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::null(what));
    }
    out.write(v);
    Ok(())
}

unsafe fn copy_out(s: &str, buf: *mut c_char, cap: usize, needed: *mut usize) -> Result<(), Fail> {
    let n = s.len() + 1;
    if !needed.is_null() {
        needed.write(n);
    }
    if buf.is_null() && cap == 0 {
        return Ok(());
    }
    if buf.is_null() {
        return Err(Fail::null("buf"));
    }
    if cap < n {
        return Err(Fail(BtStatus::BufferTooSmall, format!("need {n} bytes, have {cap}")));
    }
    ptr::copy_nonoverlapping(s.as_ptr(), buf.cast::<u8>(), s.len());
    *buf.add(s.len()) = 0;
    Ok(())
}

fn parse_config(text: Option<&str>) -> Result<EstimatorConfig, Fail> {
    match text {
        None => Ok(EstimatorConfig::default()),
        Some(t) => serde_json::from_str(t).map_err(|e| Fail(BtStatus::Parse, format!("config: {e}"))),
    }
}

fn invalid(e: impl std::fmt::Display) -> Fail {
    Fail(BtStatus::Invalid, e.to_string())
}

const NAMED: [(BtKey, KeyCode); 12] = [
    (BtKey::Backspace, KeyCode::Backspace),
    (BtKey::Delete, KeyCode::Delete),
    (BtKey::Enter, KeyCode::Enter),
    (BtKey::Tab, KeyCode::Tab),
    (BtKey::Escape, KeyCode::Escape),
    (BtKey::Left, KeyCode::Left),
    (BtKey::Right, KeyCode::Right),
    (BtKey::Up, KeyCode::Up),
    (BtKey::Down, KeyCode::Down),
    (BtKey::Home, KeyCode::Home),
    (BtKey::End, KeyCode::End),
    (BtKey::SelectAll, KeyCode::SelectAll),
];

fn to_event(e: &BtEvent) -> Result<InputEvent, Fail> {
    let payload = match e.kind {
        BtEventKind::Move => Payload::Move { dx: e.x, dy: e.y },
        BtEventKind::Down => Payload::Down,
        BtEventKind::Up => Payload::Up,
        BtEventKind::Key => {
            let key = match e.key {
                BtKey::Char => KeyCode::Char(
                    char::from_u32(e.codepoint).ok_or_else(|| invalid(format!("bad codepoint {:#x}", e.codepoint)))?,
                ),
                k => NAMED.iter().find(|(b, _)| *b == k).map(|(_, c)| *c).expect("every named key mapped"),
            };
            Payload::Key { key }
        }
        BtEventKind::TouchDown => Payload::TouchDown { x: e.x, y: e.y },
        BtEventKind::TouchMove => Payload::TouchMove { x: e.x, y: e.y },
        BtEventKind::TouchUp => Payload::TouchUp { x: e.x, y: e.y },
        BtEventKind::Boot => Payload::Boot,
    };
    Ok(InputEvent { t_ms: e.t_ms, payload })
}

fn from_event(e: &InputEvent) -> BtEvent {
    let mut out = BtEvent { t_ms: e.t_ms, kind: BtEventKind::Boot, x: 0, y: 0, key: BtKey::Char, codepoint: 0 };
    match e.payload {
        Payload::Move { dx, dy } => (out.kind, out.x, out.y) = (BtEventKind::Move, dx, dy),
        Payload::Down => out.kind = BtEventKind::Down,
        Payload::Up => out.kind = BtEventKind::Up,
        Payload::Key { key } => {
            out.kind = BtEventKind::Key;
            match key {
                KeyCode::Char(c) => out.codepoint = c as u32,
                k => out.key = NAMED.iter().find(|(_, c)| *c == k).map(|(b, _)| *b).expect("every key mapped"),
            }
        }
        Payload::TouchDown { x, y } => (out.kind, out.x, out.y) = (BtEventKind::TouchDown, x, y),
        Payload::TouchMove { x, y } => (out.kind, out.x, out.y) = (BtEventKind::TouchMove, x, y),
        Payload::TouchUp { x, y } => (out.kind, out.x, out.y) = (BtEventKind::TouchUp, x, y),
        Payload::Boot => {}
    }
    out
}

/// Copies the calling thread's last error message.
#[no_mangle]
pub unsafe extern "C" fn bt_last_error(buf: *mut c_char, cap: usize, needed: *mut usize) -> BtStatus {
    let msg = LAST_ERROR.with(|e| e.borrow().clone());
    match copy_out(&msg, buf, cap, needed) {
        Ok(()) => BtStatus::Ok,
        Err(Fail(code, _)) => code,
    }
}

/// The bundled pacemaker model.
#[no_mangle]
pub unsafe extern "C" fn bt_model_pacemaker(out: *mut *mut BtModel) -> BtStatus {
    guard(|| put(out, Box::into_raw(Box::new(BtModel(Arc::new(UiModel::pacemaker())))), "out"))
}

/// Parses and validates model text.
#[no_mangle]
pub unsafe extern "C" fn bt_model_parse(text: *const c_char, out: *mut *mut BtModel) -> BtStatus {
    guard(|| {
        let m = load_model(str_arg(text, "text")?).map_err(|e| Fail(BtStatus::Parse, e.to_string()))?;
        put(out, Box::into_raw(Box::new(BtModel(Arc::new(m)))), "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn bt_model_load_file(path: *const c_char, out: *mut *mut BtModel) -> BtStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let text = std::fs::read_to_string(path).map_err(|e| Fail(BtStatus::Io, format!("{path}: {e}")))?;
        let m = load_model(&text).map_err(|e| Fail(BtStatus::Parse, format!("{path}: {e}")))?;
        put(out, Box::into_raw(Box::new(BtModel(Arc::new(m)))), "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn bt_model_state_count(model: *const BtModel, out: *mut usize) -> BtStatus {
    guard(|| put(out, handle(model, "model")?.0.states.len(), "out"))
}

/// Id of state `index`.
#[no_mangle]
pub unsafe extern "C" fn bt_model_state_id(
    model: *const BtModel,
    index: usize,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> BtStatus {
    guard(|| {
        let m = &handle(model, "model")?.0;
        let s = m.states.get(index).ok_or_else(|| invalid(format!("state index {index} out of range")))?;
        copy_out(&s.id, buf, cap, needed)
    })
}

#[no_mangle]
pub unsafe extern "C" fn bt_model_free(model: *mut BtModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// New estimator. With `known_start` it begins in the model's start state
/// with the cursor anywhere; otherwise every state is equally likely.
/// `config_json` may be null for the defaults.
#[no_mangle]
pub unsafe extern "C" fn bt_estimator_new(
    model: *const BtModel,
    known_start: bool,
    config_json: *const c_char,
    out: *mut *mut BtEstimator,
) -> BtStatus {
    guard(|| {
        let m = handle(model, "model")?.0.clone();
        let cfg = parse_config(opt_str_arg(config_json, "config_json")?)?;
        let est = if known_start {
            let start = m.start_state.clone();
            Estimator::init_known(m, &start, None, cfg)
        } else {
            Estimator::init_unknown(m, cfg)
        }
        .map_err(invalid)?;
        put(out, Box::into_raw(Box::new(BtEstimator(est))), "out")
    })
}

/// Feeds one event. On a tracker-limit overflow the estimator collapses
/// to a coarser belief and the call still succeeds.
#[no_mangle]
pub unsafe extern "C" fn bt_estimator_observe(est: *mut BtEstimator, event: *const BtEvent) -> BtStatus {
    guard(|| {
        let est = &mut handle_mut(est, "est")?.0;
        let e = to_event(handle(event, "event")?)?;
        match est.observe(&e) {
            Ok(_) => Ok(()),
            Err(blindtrack::error::EstimatorError::TooManyTrackers { .. }) => {
                est.collapse();
                Ok(())
            }
            Err(err) => Err(invalid(err)),
        }
    })
}

/// Most likely state, its probability and the area (pixels) of its
/// combined uncertainty region. Any out pointer may be null.
#[no_mangle]
pub unsafe extern "C" fn bt_estimator_estimate(
    est: *const BtEstimator,
    top_state: *mut usize,
    top_prob: *mut f64,
    region_area: *mut u64,
    tracker_count: *mut usize,
) -> BtStatus {
    guard(|| {
        let e = handle(est, "est")?.0.estimate();
        if !top_state.is_null() {
            top_state.write(e.top_state);
        }
        if !top_prob.is_null() {
            top_prob.write(e.top_prob);
        }
        if !region_area.is_null() {
            region_area.write(e.combined_region.area() as u64);
        }
        if !tracker_count.is_null() {
            tracker_count.write(e.tracker_count);
        }
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn bt_estimator_state_prob(est: *const BtEstimator, state: usize, out: *mut f64) -> BtStatus {
    guard(|| {
        let est = &handle(est, "est")?.0;
        if state >= est.model().states.len() {
            return Err(invalid(format!("state index {state} out of range")));
        }
        put(out, est.state_prob(state), "out")
    })
}

/// Whether an attack on `state_id` could launch now.
#[no_mangle]
pub unsafe extern "C" fn bt_estimator_attack_ready(
    est: *const BtEstimator,
    state_id: *const c_char,
    out: *mut bool,
) -> BtStatus {
    guard(|| {
        let est = &handle(est, "est")?.0;
        let id = str_arg(state_id, "state_id")?;
        if est.model().state_index(id).is_none() {
            return Err(invalid(format!("unknown state `{id}`")));
        }
        put(out, est.attack_ready(id), "out")
    })
}

/// Full tracker set as JSON.
#[no_mangle]
pub unsafe extern "C" fn bt_estimator_snapshot_json(
    est: *const BtEstimator,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> BtStatus {
    guard(|| {
        let snap = handle(est, "est")?.0.snapshot();
        let text = serde_json::to_string(&snap).expect("snapshot serializes");
        copy_out(&text, buf, cap, needed)
    })
}

#[no_mangle]
pub unsafe extern "C" fn bt_estimator_free(est: *mut BtEstimator) {
    if !est.is_null() {
        drop(Box::from_raw(est));
    }
}

/// New interposer session. `spec_json` is an attack spec object as in the
/// service `open` message; `config_json` may be null.
#[no_mangle]
pub unsafe extern "C" fn bt_session_new(
    model: *const BtModel,
    spec_json: *const c_char,
    config_json: *const c_char,
    out: *mut *mut BtSession,
) -> BtStatus {
    guard(|| {
        let m = handle(model, "model")?.0.clone();
        let spec: AttackSpec = serde_json::from_str(str_arg(spec_json, "spec_json")?)
            .map_err(|e| Fail(BtStatus::Parse, format!("spec: {e}")))?;
        let cfg = parse_config(opt_str_arg(config_json, "config_json")?)?;
        let inner = Session::new(m, spec, cfg).map_err(invalid)?;
        put(out, Box::into_raw(Box::new(BtSession { inner, pending: VecDeque::new(), log: String::new() })), "out")
    })
}

fn queue(s: &mut BtSession, ds: Vec<InterposerDecision>) {
    for d in ds {
        for line in d.log_lines() {
            s.log.push_str(&line);
            s.log.push('\n');
        }
        s.pending.extend(d.delivered());
    }
}

/// Feeds one user event. The events to deliver are queued; `pending`
/// (may be null) receives the queue length. Read them with
/// [`bt_session_drain`].
#[no_mangle]
pub unsafe extern "C" fn bt_session_interpose(
    session: *mut BtSession,
    event: *const BtEvent,
    pending: *mut usize,
) -> BtStatus {
    guard(|| {
        let s = handle_mut(session, "session")?;
        let e = to_event(handle(event, "event")?)?;
        let ds = s.inner.interpose(&e).map_err(invalid)?;
        queue(s, ds);
        if !pending.is_null() {
            pending.write(s.pending.len());
        }
        Ok(())
    })
}

/// Flushes held events at end of input.
#[no_mangle]
pub unsafe extern "C" fn bt_session_finish(session: *mut BtSession, pending: *mut usize) -> BtStatus {
    guard(|| {
        let s = handle_mut(session, "session")?;
        let ds = s.inner.finish().map_err(invalid)?;
        queue(s, ds);
        if !pending.is_null() {
            pending.write(s.pending.len());
        }
        Ok(())
    })
}

/// Moves up to `cap` queued events into `out`, oldest first.
#[no_mangle]
pub unsafe extern "C" fn bt_session_drain(
    session: *mut BtSession,
    out: *mut BtEvent,
    cap: usize,
    written: *mut usize,
) -> BtStatus {
    guard(|| {
        let s = handle_mut(session, "session")?;
        if out.is_null() && cap > 0 {
            return Err(Fail::null("out"));
        }
        let n = cap.min(s.pending.len());
        for (i, e) in s.pending.drain(..n).enumerate() {
            out.add(i).write(from_event(&e));
        }
        put(written, n, "written")
    })
}

#[no_mangle]
pub unsafe extern "C" fn bt_session_launched(session: *const BtSession, out: *mut bool) -> BtStatus {
    guard(|| put(out, handle(session, "session")?.inner.launched(), "out"))
}

/// Decision log so far, one line per decision.
#[no_mangle]
pub unsafe extern "C" fn bt_session_log(
    session: *const BtSession,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> BtStatus {
    guard(|| copy_out(&handle(session, "session")?.log, buf, cap, needed))
}

#[no_mangle]
pub unsafe extern "C" fn bt_session_free(session: *mut BtSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}
