//! Input events, traces and the line-oriented trace file format.
//!
//! ```text
//! # comment
//! @model pacemaker
//! @mode relative_mouse
//! @seed 7
//! 0 move 12 -3
//! 840 down
//! 910 up
//! 1500 key 7
//! 1620 key SelectAll
//! ```
//!
//! Header lines start with `@`, events are `t_ms kind args...`. Relative
//! events (`move`, `down`, `up`) and absolute ones (`touch_down`,
//! `touch_move`, `touch_up`) never mix in one trace; `key` and `boot` are
//! allowed in both.

mod corpus;
mod generate;
mod touch;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use corpus::{load_corpus, write_corpus, Manifest, MANIFEST};
pub use generate::{generate, GoalAction, GoalStep, Task, UserProfile, PACEMAKER_TASK};
pub use touch::to_touchscreen;

use crate::error::TraceError;
use crate::geometry::{Delta, Point};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    #[default]
    RelativeMouse,
    AbsoluteTouch,
}

impl InputMode {
    pub fn as_str(self) -> &'static str {
        match self {
            InputMode::RelativeMouse => "relative_mouse",
            InputMode::AbsoluteTouch => "absolute_touch",
        }
    }
}

impl FromStr for InputMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "relative_mouse" => Ok(InputMode::RelativeMouse),
            "absolute_touch" => Ok(InputMode::AbsoluteTouch),
            _ => Err(format!("unknown input mode `{s}`")),
        }
    }
}

/// A keyboard key. Printable characters carry their char; editing keys are
/// named.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KeyCode {
    Char(char),
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

const NAMED_KEYS: &[(&str, KeyCode)] = &[
    ("Backspace", KeyCode::Backspace),
    ("Delete", KeyCode::Delete),
    ("Enter", KeyCode::Enter),
    ("Tab", KeyCode::Tab),
    ("Escape", KeyCode::Escape),
    ("Left", KeyCode::Left),
    ("Right", KeyCode::Right),
    ("Up", KeyCode::Up),
    ("Down", KeyCode::Down),
    ("Home", KeyCode::Home),
    ("End", KeyCode::End),
    ("SelectAll", KeyCode::SelectAll),
];

impl KeyCode {
    pub fn is_printable(self) -> bool {
        matches!(self, KeyCode::Char(c) if !c.is_control())
    }
}

impl fmt::Display for KeyCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KeyCode::Char(' ') => f.write_str("Space"),
            KeyCode::Char(c) => write!(f, "{c}"),
            named => {
                let name = NAMED_KEYS.iter().find(|(_, k)| k == named).map(|(n, _)| *n).unwrap_or("?");
                f.write_str(name)
            }
        }
    }
}

impl FromStr for KeyCode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let mut chars = s.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => Ok(KeyCode::Char(c)),
            _ if s == "Space" => Ok(KeyCode::Char(' ')),
            _ => NAMED_KEYS
                .iter()
                .find(|(n, _)| *n == s)
                .map(|(_, k)| *k)
                .ok_or_else(|| format!("unknown key `{s}`")),
        }
    }
}

impl Serialize for KeyCode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for KeyCode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Payload {
    Move { dx: i32, dy: i32 },
    Down,
    Up,
    Key { key: KeyCode },
    TouchDown { x: i32, y: i32 },
    TouchMove { x: i32, y: i32 },
    TouchUp { x: i32, y: i32 },
    /// Terminal (re)boot marker.
    Boot,
}

impl Payload {
    pub fn kind(&self) -> &'static str {
        match self {
            Payload::Move { .. } => "move",
            Payload::Down => "down",
            Payload::Up => "up",
            Payload::Key { .. } => "key",
            Payload::TouchDown { .. } => "touch_down",
            Payload::TouchMove { .. } => "touch_move",
            Payload::TouchUp { .. } => "touch_up",
            Payload::Boot => "boot",
        }
    }

    /// Input mode implied by the payload, `None` for mode-neutral events.
    pub fn mode(&self) -> Option<InputMode> {
        match self {
            Payload::Move { .. } | Payload::Down | Payload::Up => Some(InputMode::RelativeMouse),
            Payload::TouchDown { .. } | Payload::TouchMove { .. } | Payload::TouchUp { .. } => {
                Some(InputMode::AbsoluteTouch)
            }
            Payload::Key { .. } | Payload::Boot => None,
        }
    }

    pub fn delta(&self) -> Option<Delta> {
        match *self {
            Payload::Move { dx, dy } => Some(Delta::new(dx, dy)),
            _ => None,
        }
    }

    pub fn touch_point(&self) -> Option<Point> {
        match *self {
            Payload::TouchDown { x, y } | Payload::TouchMove { x, y } | Payload::TouchUp { x, y } => {
                Some(Point::new(x, y))
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InputEvent {
    pub t_ms: u64,
    #[serde(flatten)]
    pub payload: Payload,
}

impl InputEvent {
    pub const fn new(t_ms: u64, payload: Payload) -> Self {
        Self { t_ms, payload }
    }

    pub const fn mv(t_ms: u64, dx: i32, dy: i32) -> Self {
        Self::new(t_ms, Payload::Move { dx, dy })
    }

    pub const fn down(t_ms: u64) -> Self {
        Self::new(t_ms, Payload::Down)
    }

    pub const fn up(t_ms: u64) -> Self {
        Self::new(t_ms, Payload::Up)
    }

    pub const fn key(t_ms: u64, key: KeyCode) -> Self {
        Self::new(t_ms, Payload::Key { key })
    }

    pub fn at(self, t_ms: u64) -> Self {
        Self { t_ms, ..self }
    }
}

impl fmt::Display for InputEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.t_ms, self.payload.kind())?;
        match self.payload {
            Payload::Move { dx, dy } => write!(f, " {dx} {dy}"),
            Payload::Key { key } => write!(f, " {key}"),
            Payload::TouchDown { x, y } | Payload::TouchMove { x, y } | Payload::TouchUp { x, y } => {
                write!(f, " {x} {y}")
            }
            Payload::Down | Payload::Up | Payload::Boot => Ok(()),
        }
    }
}

fn parse_int(tok: &str, index: usize, line: usize) -> Result<i32, TraceError> {
    tok.parse::<i32>().map_err(|_| {
        if tok.parse::<f64>().is_ok() {
            TraceError::FractionalDelta { index, value: tok.to_string() }
        } else {
            TraceError::Syntax { line, msg: format!("expected integer, got `{tok}`") }
        }
    })
}

/// Parse one event line (no header handling, no ordering checks).
pub fn parse_event_line(text: &str, index: usize, line: usize) -> Result<InputEvent, TraceError> {
    let syntax = |msg: String| TraceError::Syntax { line, msg };
    let toks: Vec<&str> = text.split_whitespace().collect();
    let (t, kind, args) = match toks.as_slice() {
        [t, kind, args @ ..] => (t, *kind, args),
        _ => return Err(syntax(format!("expected `t_ms kind args`, got `{text}`"))),
    };
    let t_ms = t.parse::<u64>().map_err(|_| syntax(format!("bad timestamp `{t}`")))?;
    let two = |args: &[&str]| -> Result<(i32, i32), TraceError> {
        match args {
            [a, b] => Ok((parse_int(a, index, line)?, parse_int(b, index, line)?)),
            _ => Err(TraceError::Syntax { line, msg: format!("`{kind}` takes two integers") }),
        }
    };
    let payload = match kind {
        "move" => {
            let (dx, dy) = two(args)?;
            Payload::Move { dx, dy }
        }
        "touch_down" | "touch_move" | "touch_up" => {
            let (x, y) = two(args)?;
            match kind {
                "touch_down" => Payload::TouchDown { x, y },
                "touch_move" => Payload::TouchMove { x, y },
                _ => Payload::TouchUp { x, y },
            }
        }
        "down" | "up" | "boot" if args.is_empty() => match kind {
            "down" => Payload::Down,
            "up" => Payload::Up,
            _ => Payload::Boot,
        },
        "key" => match args {
            [k] => Payload::Key { key: k.parse().map_err(syntax)? },
            _ => return Err(syntax("`key` takes one key token".into())),
        },
        _ => return Err(syntax(format!("unknown event `{text}`"))),
    };
    Ok(InputEvent { t_ms, payload })
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TraceMeta {
    pub model: Option<String>,
    pub mode: Option<InputMode>,
    pub seed: Option<u64>,
    /// Other `@key value` headers, in file order.
    pub extra: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Trace {
    pub meta: TraceMeta,
    pub events: Vec<InputEvent>,
}

impl Trace {
    pub fn new(events: Vec<InputEvent>) -> Self {
        Self { meta: TraceMeta::default(), events }
    }

    /// Input mode: the header's if set, else inferred from the events.
    pub fn mode(&self) -> InputMode {
        self.meta
            .mode
            .or_else(|| self.events.iter().find_map(|e| e.payload.mode()))
            .unwrap_or_default()
    }

    pub fn click_count(&self) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e.payload, Payload::Up | Payload::TouchUp { .. }))
            .count()
    }

    /// Checks ordering and mode invariants.
    pub fn check(&self) -> Result<(), TraceError> {
        let mut mode = self.meta.mode;
        let mut last = 0u64;
        for (index, e) in self.events.iter().enumerate() {
            if e.t_ms < last {
                return Err(TraceError::TimeRegression { index, t_ms: e.t_ms });
            }
            last = e.t_ms;
            if let Some(m) = e.payload.mode() {
                match mode {
                    Some(prev) if prev != m => {
                        return Err(TraceError::MixedModes { index, kind: e.payload.kind() })
                    }
                    _ => mode = Some(m),
                }
            }
        }
        Ok(())
    }

    /// Index of the first event at or after `fraction` of the trace that
    /// is not inside a press; events before it are what an observer that
    /// joins late has missed.
    pub fn quiet_cut(&self, fraction: f64) -> usize {
        let want = (self.events.len() as f64 * fraction).ceil() as usize;
        let mut pressed = false;
        for (i, e) in self.events.iter().enumerate() {
            if i >= want && !pressed {
                return i;
            }
            match e.payload {
                Payload::Down | Payload::TouchDown { .. } => pressed = true,
                Payload::Up | Payload::TouchUp { .. } => pressed = false,
                _ => {}
            }
        }
        self.events.len()
    }

    pub fn header_value(&self, key: &str) -> Option<&str> {
        self.meta.extra.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

pub fn parse_trace(text: &str) -> Result<Trace, TraceError> {
    let mut trace = Trace::default();
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let s = raw.trim();
        if s.is_empty() || s.starts_with('#') {
            continue;
        }
        if let Some(h) = s.strip_prefix('@') {
            let (k, v) = h.split_once(char::is_whitespace).unwrap_or((h, ""));
            let v = v.trim();
            let bad = |msg: String| TraceError::Syntax { line, msg };
            match k {
                "model" => trace.meta.model = Some(v.to_string()),
                "mode" => trace.meta.mode = Some(v.parse().map_err(bad)?),
                "seed" => trace.meta.seed = Some(v.parse().map_err(|_| bad(format!("bad seed `{v}`")))?),
                _ => trace.meta.extra.push((k.to_string(), v.to_string())),
            }
            continue;
        }
        let ev = parse_event_line(s, trace.events.len(), line)?;
        trace.events.push(ev);
    }
    trace.check()?;
    Ok(trace)
}

pub fn serialize_trace(trace: &Trace) -> String {
    let mut out = String::new();
    if let Some(m) = &trace.meta.model {
        out.push_str(&format!("@model {m}\n"));
    }
    if let Some(m) = trace.meta.mode {
        out.push_str(&format!("@mode {}\n", m.as_str()));
    }
    if let Some(s) = trace.meta.seed {
        out.push_str(&format!("@seed {s}\n"));
    }
    for (k, v) in &trace.meta.extra {
        out.push_str(&format!("@{k} {v}\n"));
    }
    for e in &trace.events {
        out.push_str(&e.to_string());
        out.push('\n');
    }
    out
}
