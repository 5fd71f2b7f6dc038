//! Relative-mouse to absolute-touch trace conversion.

use super::{InputEvent, InputMode, Payload, Trace};
use crate::model::UiModel;
use crate::terminal::TerminalState;

/// Replays `trace` on the oracle and re-emits presses at the true cursor.
/// Motion outside a press is dropped; motion during a press becomes
/// `touch_move`. Keys and boot markers are kept.
pub fn to_touchscreen(model: &UiModel, trace: &Trace, boot: Option<TerminalState>) -> Trace {
    let mut t = boot.unwrap_or_else(|| TerminalState::boot(model));
    let mut out = Vec::new();
    for e in &trace.events {
        t.apply(model, e);
        let c = t.cursor;
        let p = match e.payload {
            Payload::Move { .. } if t.press.is_some() => Payload::TouchMove { x: c.x, y: c.y },
            Payload::Move { .. } => continue,
            Payload::Down => Payload::TouchDown { x: c.x, y: c.y },
            Payload::Up => Payload::TouchUp { x: c.x, y: c.y },
            other => other,
        };
        out.push(InputEvent::new(e.t_ms, p));
    }
    let mut meta = trace.meta.clone();
    meta.mode = Some(InputMode::AbsoluteTouch);
    Trace { meta, events: out }
}
