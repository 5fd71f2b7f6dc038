//! The interposer: per-event pass/block/delay/inject decisions, injection
//! planning, and attack runs scored against the terminal oracle.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{AttackError, EstimatorError, TraceError};
use crate::estimator::{Estimator, EstimatorConfig};
use crate::geometry::{Delta, Rect, Region};
use crate::model::{ElementKind, UiElement, UiModel, Value};
use crate::terminal::{edit_text, slider_step, TerminalState};
use crate::trace::{parse_event_line, InputEvent, InputMode, KeyCode, Payload, Trace};

/// Largest per-axis delta in one injected move report.
pub const MAX_MOVE: i32 = 127;
pub const SPEED_PRESETS_MS: [u64; 5] = [5, 10, 62, 125, 250];
pub const DEFAULT_STEP_INTERVAL_MS: u64 = 10;
pub const DEFAULT_ELEMENT_WAIT_MS: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    ElementDriven,
    ConfirmationDriven,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::ElementDriven => "element",
            Variant::ConfirmationDriven => "confirmation",
        }
    }
}

impl FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "element" | "element_driven" => Ok(Variant::ElementDriven),
            "confirmation" | "confirmation_driven" => Ok(Variant::ConfirmationDriven),
            _ => Err(format!("unknown attack variant `{s}` (element|confirmation)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub variant: Variant,
    pub target_element: String,
    pub malicious_value: Value,
    #[serde(default = "default_step")]
    pub step_interval_ms: u64,
    #[serde(default = "default_wait")]
    pub element_wait_ms: u64,
}

fn default_step() -> u64 {
    DEFAULT_STEP_INTERVAL_MS
}

fn default_wait() -> u64 {
    DEFAULT_ELEMENT_WAIT_MS
}

impl AttackSpec {
    pub fn new(variant: Variant, target_element: &str, malicious_value: Value) -> Self {
        Self {
            variant,
            target_element: target_element.to_string(),
            malicious_value,
            step_interval_ms: DEFAULT_STEP_INTERVAL_MS,
            element_wait_ms: DEFAULT_ELEMENT_WAIT_MS,
        }
    }

    pub fn with_interval(mut self, ms: u64) -> Self {
        self.step_interval_ms = ms;
        self
    }

    /// Resolves the target state, element and confirmation element, and
    /// checks the malicious value against the element's domain.
    pub fn resolve(&self, model: &UiModel) -> Result<Target, AttackError> {
        if self.step_interval_ms == 0 {
            return Err(AttackError::Spec("step_interval_ms must be positive".into()));
        }
        let missing = || AttackError::MissingElement(self.target_element.clone());
        let (state, element) = model
            .target_states
            .iter()
            .filter_map(|s| model.state(s))
            .find_map(|s| s.element(&self.target_element).filter(|e| e.is_target).map(|e| (s, e)))
            .ok_or_else(missing)?;
        let confirmation = state.elements.iter().find(|e| e.is_confirmation).ok_or_else(missing)?;
        check_value(element, &self.malicious_value)?;
        Ok(Target {
            state: state.id.clone(),
            state_index: model.state_index(&state.id).expect("state from model"),
            element: element.clone(),
            confirmation: confirmation.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    pub state: String,
    pub state_index: usize,
    pub element: UiElement,
    pub confirmation: UiElement,
}

/// Target sliders and text fields of the model's target states, each id
/// once, in model order.
pub fn target_elements(model: &UiModel) -> Vec<String> {
    let mut seen = std::collections::HashSet::new();
    model
        .target_states
        .iter()
        .filter_map(|s| model.state(s))
        .flat_map(|s| s.elements.iter())
        .filter(|e| e.is_target && matches!(e.kind, ElementKind::Slider | ElementKind::TextField))
        .filter(|e| seen.insert(e.id.clone()))
        .map(|e| e.id.clone())
        .collect()
}

/// A value on the element's grid four fifths of the way up its domain.
pub fn default_malicious_value(model: &UiModel, element: &str) -> Result<Value, AttackError> {
    let (_, el) = model.find_element(element).ok_or_else(|| AttackError::MissingElement(element.to_string()))?;
    let d = el.value_domain.ok_or_else(|| AttackError::BadValue {
        element: element.to_string(),
        value: String::new(),
        msg: "element holds no value".into(),
    })?;
    let v = d.value_at(d.steps() * 4 / 5);
    Ok(match el.kind {
        ElementKind::TextField => Value::Text(crate::model::format_number(v)),
        _ => Value::Number(v),
    })
}

fn check_value(el: &UiElement, v: &Value) -> Result<(), AttackError> {
    let bad = |msg: &str| AttackError::BadValue { element: el.id.clone(), value: v.to_text(), msg: msg.to_string() };
    let Some(d) = el.value_domain else {
        return Err(bad("element holds no value"));
    };
    let n = v.as_number().ok_or_else(|| bad("not a number"))?;
    if !d.contains(n) {
        return Err(bad("outside the element's domain"));
    }
    match el.kind {
        ElementKind::Slider if !d.on_grid(n) => Err(bad("not on the slider's step grid")),
        ElementKind::TextField if !v.to_text().chars().all(|c| c.is_ascii_digit() || c == '.') => {
            Err(bad("cannot be typed into a numeric field"))
        }
        _ => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InterposerDecision {
    Pass(InputEvent),
    Block(InputEvent),
    Inject(Vec<InputEvent>),
    Delay(InputEvent, u64),
}

impl InterposerDecision {
    /// Events this decision hands to the terminal, with delivery times.
    pub fn delivered(&self) -> Vec<InputEvent> {
        match self {
            InterposerDecision::Pass(e) => vec![*e],
            InterposerDecision::Block(_) => Vec::new(),
            InterposerDecision::Inject(es) => es.clone(),
            InterposerDecision::Delay(e, ms) => vec![e.at(e.t_ms + ms)],
        }
    }

    /// Decision log lines: `PASS <event>`, `BLOCK <event>`,
    /// `DELAY <ms> <event>`, and one `INJECT <event>` per injected event.
    pub fn log_lines(&self) -> Vec<String> {
        match self {
            InterposerDecision::Pass(e) => vec![format!("PASS {e}")],
            InterposerDecision::Block(e) => vec![format!("BLOCK {e}")],
            InterposerDecision::Delay(e, ms) => vec![format!("DELAY {ms} {e}")],
            InterposerDecision::Inject(es) => es.iter().map(|e| format!("INJECT {e}")).collect(),
        }
    }
}

impl fmt::Display for InterposerDecision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.log_lines().join("\n"))
    }
}

/// Rebuilds the delivered event stream from a decision log.
pub fn delivered_from_log(log: &str) -> Result<Vec<InputEvent>, TraceError> {
    let mut out = Vec::new();
    for (i, raw) in log.lines().enumerate() {
        let line = i + 1;
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let (verb, rest) = raw.split_once(' ').unwrap_or((raw, ""));
        match verb {
            "PASS" | "INJECT" => out.push(parse_event_line(rest, out.len(), line)?),
            "BLOCK" => {
                parse_event_line(rest, out.len(), line)?;
            }
            "DELAY" => {
                let (ms, ev) = rest.split_once(' ').unwrap_or((rest, ""));
                let ms: u64 = ms
                    .parse()
                    .map_err(|_| TraceError::Syntax { line, msg: format!("bad delay `{ms}`") })?;
                let e = parse_event_line(ev, out.len(), line)?;
                out.push(e.at(e.t_ms + ms));
            }
            _ => return Err(TraceError::Syntax { line, msg: format!("unknown decision `{verb}`") }),
        }
    }
    Ok(out)
}

fn push_move(out: &mut Vec<InputEvent>, d: Delta) {
    let n = ((d.dx.abs().max(d.dy.abs()) + MAX_MOVE - 1) / MAX_MOVE) as i64;
    let (dx, dy) = (d.dx as i64, d.dy as i64);
    for i in 0..n {
        let sx = dx * (i + 1) / n - dx * i / n;
        let sy = dy * (i + 1) / n - dy * i / n;
        out.push(InputEvent::mv(0, sx as i32, sy as i32));
    }
}

/// Moves from the screen's far corner to (0, 0) from anywhere, in
/// report-sized chunks.
pub fn corner_sweep(screen: &Rect) -> Vec<InputEvent> {
    let mut out = Vec::new();
    push_move(&mut out, Delta::new(-screen.w, -screen.h));
    out
}

/// Displacement that lands every point of `from` inside `rect`, aligning
/// the bounding-box center with the rect center.
pub fn landing_delta(from: &Region, rect: &Rect) -> Option<Delta> {
    let bb = from.bounding_box()?;
    if bb.w > rect.w || bb.h > rect.h {
        return None;
    }
    Some(Delta::new(rect.x + (rect.w - bb.w) / 2 - bb.x, rect.y + (rect.h - bb.h) / 2 - bb.y))
}

/// Smallest displacement that moves a slider exactly `q` steps up.
fn drag_for_steps(q: i64, steps: i64, width: i32) -> Option<i64> {
    if q == 0 {
        return Some(0);
    }
    let span = (width - 1).max(1) as i64;
    let dx = ((2 * q - 1) * span + 2 * steps - 1) / (2 * steps);
    (slider_step(0, dx, steps, width) == q).then_some(dx)
}

/// Input that sets `element` in `state` to `value` starting from any
/// cursor position in `from`, ending with the cursor back where it was.
/// Buttons are clicked and `value` is ignored.
pub fn value_injection_plan(
    model: &UiModel,
    state: &str,
    element: &str,
    from: &Region,
    value: &Value,
) -> Result<Vec<InputEvent>, AttackError> {
    let el = model.element(state, element).map_err(|_| AttackError::MissingElement(element.to_string()))?;
    let d = landing_delta(from, &el.rect).ok_or_else(|| AttackError::RegionTooLarge(el.id.clone()))?;
    let bb = from.bounding_box().expect("non-empty");
    let landed = Rect::new(bb.x + d.dx, bb.y + d.dy, bb.w, bb.h);
    let mut out = Vec::new();
    push_move(&mut out, d);
    match el.kind {
        ElementKind::Button | ElementKind::MultipleChoice => {
            out.push(InputEvent::down(0));
            out.push(InputEvent::up(0));
        }
        ElementKind::TextField => {
            check_value(el, value)?;
            out.push(InputEvent::down(0));
            out.push(InputEvent::up(0));
            out.extend(el.default_clear_keys().into_iter().map(|k| InputEvent::key(0, k)));
            out.extend(value.to_text().chars().map(|c| InputEvent::key(0, KeyCode::Char(c))));
        }
        ElementKind::Slider => {
            check_value(el, value)?;
            slider_plan(model, el, &landed, value, &mut out)?;
        }
    }
    push_move(&mut out, -d);
    Ok(out)
}

/// Drags the slider down to its minimum, then up to the target step, in
/// press-drag-release-return strokes that never touch the screen edge.
fn slider_plan(model: &UiModel, el: &UiElement, landed: &Rect, value: &Value, out: &mut Vec<InputEvent>) -> Result<(), AttackError> {
    let dom = el.value_domain.expect("slider has a domain");
    let n = dom.steps();
    let target = dom.step_of(value.as_number().expect("checked"));
    let span = (el.rect.w - 1).max(1) as i64;
    let clamp_err = || AttackError::WouldClamp(el.id.clone());
    let mut stroke = |dx: i64| {
        out.push(InputEvent::down(0));
        push_move(out, Delta::new(dx as i32, 0));
        out.push(InputEvent::up(0));
        push_move(out, Delta::new(-dx as i32, 0));
    };
    let left = landed.x as i64;
    let mut remaining = n;
    while remaining > 0 {
        let l = left.min(span);
        let dq = n - slider_step(n, -l, n, el.rect.w);
        if dq == 0 {
            return Err(clamp_err());
        }
        stroke(-l);
        remaining -= dq;
    }
    let right = (model.screen_width - landed.x - landed.w) as i64;
    let per_stroke = (2 * right * n + span) / (2 * span);
    let mut remaining = target;
    while remaining > 0 {
        let q = remaining.min(per_stroke);
        let dx = (1..=q).rev().find_map(|q| drag_for_steps(q, n, el.rect.w).filter(|&dx| dx <= right).map(|dx| (q, dx)));
        let Some((q, dx)) = dx else { return Err(clamp_err()) };
        stroke(dx);
        remaining -= q;
    }
    Ok(())
}

/// Stamps events at `start`, `start + step`, ...
fn pace(events: &mut [InputEvent], start: u64, step: u64) {
    for (i, e) in events.iter_mut().enumerate() {
        e.t_ms = start + step * i as u64;
    }
}

/// The device's belief about the target element's user-set value and
/// text focus, built only from observed input.
#[derive(Debug, Clone)]
struct Belief {
    value: Value,
    focused: bool,
    selected: bool,
    press: Option<BeliefPress>,
}

#[derive(Debug, Clone, Copy)]
struct BeliefPress {
    on_target: bool,
    raw_dx: i64,
    touch_x: Option<i32>,
}

impl Belief {
    fn new(el: &UiElement) -> Self {
        let value = el.initial_value().unwrap_or(Value::Text(String::new()));
        Self { value, focused: false, selected: false, press: None }
    }
}

#[derive(Debug, Clone)]
enum Phase {
    Armed,
    /// Confirmation press held back while deciding.
    Holding(Vec<InputEvent>),
    Done,
}

/// One interposer session: estimator, belief and attack phase for one
/// ordered event stream.
#[derive(Debug, Clone)]
pub struct Session {
    model: Arc<UiModel>,
    spec: AttackSpec,
    target: Target,
    est: Estimator,
    belief: Belief,
    phase: Phase,
    /// Earliest time the next delivered event may carry.
    busy_until: u64,
    last_active_t: Option<u64>,
    edited: bool,
    launched: bool,
    injected: u64,
    collapses: u32,
}

impl Session {
    /// Starts a session at terminal boot: known start state, cursor
    /// anywhere on screen.
    pub fn new(model: Arc<UiModel>, spec: AttackSpec, cfg: EstimatorConfig) -> Result<Self, AttackError> {
        if cfg.input_mode != InputMode::RelativeMouse {
            return Err(AttackError::Spec("attacks need a relative-mouse session".into()));
        }
        let target = spec.resolve(&model)?;
        let est = Estimator::init_known(model.clone(), &model.start_state, None, cfg)?;
        Ok(Self {
            belief: Belief::new(&target.element),
            model,
            spec,
            target,
            est,
            phase: Phase::Armed,
            busy_until: 0,
            last_active_t: None,
            edited: false,
            launched: false,
            injected: 0,
            collapses: 0,
        })
    }

    pub fn spec(&self) -> &AttackSpec {
        &self.spec
    }

    pub fn target(&self) -> &Target {
        &self.target
    }

    pub fn estimator(&self) -> &Estimator {
        &self.est
    }

    pub fn launched(&self) -> bool {
        self.launched
    }

    /// A user edit of the target element was seen while attack_ready held.
    pub fn edit_seen(&self) -> bool {
        self.edited
    }

    pub fn injected_event_count(&self) -> u64 {
        self.injected
    }

    /// Clicks where the tracker limit forced a collapse.
    pub fn collapses(&self) -> u32 {
        self.collapses
    }

    fn ready(&self) -> bool {
        self.est.attack_ready(&self.target.state)
    }

    fn region(&self) -> Region {
        self.est.combined_region(self.target.state_index)
    }

    fn observe(&mut self, e: &InputEvent) -> Result<(), AttackError> {
        match self.est.observe(e) {
            Ok(_) => Ok(()),
            Err(EstimatorError::TooManyTrackers { .. }) => {
                self.collapses += 1;
                self.est.collapse();
                Ok(())
            }
            Err(err) => Err(err.into()),
        }
    }

    /// Delivers a user event now or, while an injection is still
    /// playing, after it.
    fn deliver(&mut self, e: InputEvent, out: &mut Vec<InterposerDecision>) -> Result<(), AttackError> {
        let d = if e.t_ms < self.busy_until {
            InterposerDecision::Delay(e, self.busy_until - e.t_ms)
        } else {
            InterposerDecision::Pass(e)
        };
        self.busy_until = self.busy_until.max(e.t_ms);
        if !matches!(self.phase, Phase::Done) {
            self.update_belief(&e);
        }
        self.observe(&e)?;
        out.push(d);
        Ok(())
    }

    fn inject(&mut self, mut events: Vec<InputEvent>, start: u64, out: &mut Vec<InterposerDecision>) -> Result<(), AttackError> {
        if events.is_empty() {
            return Ok(());
        }
        pace(&mut events, start, self.spec.step_interval_ms);
        self.busy_until = events.last().expect("non-empty").t_ms;
        for e in &events {
            self.observe(e)?;
        }
        self.injected += events.len() as u64;
        self.launched = true;
        out.push(InterposerDecision::Inject(events));
        Ok(())
    }

    fn update_belief(&mut self, e: &InputEvent) {
        let on_target = matches!(e.payload, Payload::Down | Payload::TouchDown { .. }) && self.pressing_target();
        let el = &self.target.element;
        let b = &mut self.belief;
        match e.payload {
            Payload::Down | Payload::TouchDown { .. } => {
                let touch_x = e.payload.touch_point().map(|p| p.x);
                if b.press.is_none() {
                    b.press = Some(BeliefPress { on_target, raw_dx: 0, touch_x });
                }
            }
            Payload::Move { dx, .. } => {
                if let Some(p) = &mut b.press {
                    p.raw_dx += dx as i64;
                }
            }
            Payload::TouchMove { x, .. } | Payload::TouchUp { x, .. } => {
                if let Some(p) = &mut b.press {
                    p.raw_dx = p.touch_x.map_or(0, |x0| (x - x0) as i64);
                }
            }
            Payload::Key { key } => {
                if b.focused && el.kind == ElementKind::TextField {
                    let mut text = b.value.to_text();
                    if edit_text(&mut text, &mut b.selected, key, el.value_domain.is_some()) {
                        b.value = Value::Text(text);
                        self.edited |= self.est.attack_ready(&self.target.state);
                    }
                }
            }
            Payload::Boot => {
                *b = Belief::new(el);
            }
            _ => {}
        }
        if matches!(e.payload, Payload::Up | Payload::TouchUp { .. }) {
            let Some(p) = b.press.take() else { return };
            let click = p.raw_dx.abs() < self.est.config().drag_threshold as i64;
            match el.kind {
                ElementKind::Slider if p.on_target => {
                    let dom = el.value_domain.expect("slider has a domain");
                    let k0 = dom.step_of(b.value.as_number().unwrap_or(dom.min));
                    let k = slider_step(k0, p.raw_dx, dom.steps(), el.rect.w);
                    b.value = Value::Number(dom.value_at(k));
                    if !click {
                        self.edited |= self.est.attack_ready(&self.target.state);
                    }
                }
                ElementKind::TextField if p.on_target && click => {
                    if !b.focused {
                        b.focused = true;
                        b.selected = false;
                    }
                }
                _ => {
                    b.focused = false;
                    b.selected = false;
                }
            }
        }
    }

    /// A press now would land on the target element: the target state is
    /// likely and its region touches the target element but no other
    /// element of the same kind.
    fn pressing_target(&self) -> bool {
        let t = &self.target;
        if self.est.state_prob(t.state_index) < self.est.config().target_prob_threshold {
            return false;
        }
        let r = self.region();
        let ui = &self.model.states[t.state_index];
        r.intersects_rect(&t.element.rect)
            && !ui
                .elements
                .iter()
                .any(|e| e.kind == t.element.kind && e.id != t.element.id && r.intersects_rect(&e.rect))
    }

    /// Decides what happens to one raw input event.
    pub fn interpose(&mut self, e: &InputEvent) -> Result<Vec<InterposerDecision>, AttackError> {
        let mut out = Vec::new();
        // pointer motion does not end a quiet period; presses and keys do
        let quiet_since = if e.payload.delta().is_some() {
            self.last_active_t
        } else {
            self.last_active_t.replace(e.t_ms)
        };
        match self.spec.variant {
            Variant::ElementDriven => {
                if let (Phase::Armed, Some(t0)) = (&self.phase, quiet_since) {
                    let due = t0 + self.spec.element_wait_ms;
                    if self.edited && self.belief.press.is_none() && e.t_ms >= due && self.ready() {
                        if let Ok(plan) = self.plan(&self.target.state.clone(), &self.spec.malicious_value.clone()) {
                            let start = due.max(self.busy_until + self.spec.step_interval_ms);
                            self.inject(plan, start, &mut out)?;
                            self.phase = Phase::Done;
                        }
                    }
                }
                self.deliver(*e, &mut out)?;
            }
            Variant::ConfirmationDriven => self.confirmation(e, &mut out)?,
        }
        Ok(out)
    }

    fn plan(&self, state: &str, value: &Value) -> Result<Vec<InputEvent>, AttackError> {
        value_injection_plan(&self.model, state, &self.target.element.id, &self.region(), value)
    }

    fn confirmation(&mut self, e: &InputEvent, out: &mut Vec<InterposerDecision>) -> Result<(), AttackError> {
        match &mut self.phase {
            Phase::Armed => {
                if e.payload == Payload::Down
                    && !self.est.pressed()
                    && self.ready()
                    && self.region().is_within(&self.target.confirmation.rect)
                {
                    self.phase = Phase::Holding(vec![*e]);
                    return Ok(());
                }
                self.deliver(*e, out)
            }
            Phase::Holding(held) => {
                held.push(*e);
                if e.payload != Payload::Up {
                    return Ok(());
                }
                let held = std::mem::take(held);
                self.phase = Phase::Armed;
                self.release(held, out)
            }
            Phase::Done => self.deliver(*e, out),
        }
    }

    /// Resolves a held confirmation press: strike if the press is still a
    /// click inside the confirmation element, otherwise let it through.
    fn release(&mut self, held: Vec<InputEvent>, out: &mut Vec<InterposerDecision>) -> Result<(), AttackError> {
        let (down, rest) = held.split_first().expect("held starts with the press");
        let (up, middle) = rest.split_last().expect("held ends with the release");
        let raw_dx: i64 = middle.iter().filter_map(|e| e.payload.delta()).map(|d| d.dx as i64).sum();
        let mut probe = self.clone();
        for e in middle {
            probe.observe(e)?;
        }
        let strike = raw_dx.abs() < self.est.config().drag_threshold as i64
            && probe.ready()
            && probe.region().is_within(&self.target.confirmation.rect);
        let plans = if strike { probe.strike_plans().ok() } else { None };
        let Some((set, click, restore)) = plans else {
            for e in held {
                self.deliver(e, out)?;
            }
            return Ok(());
        };
        out.push(InterposerDecision::Block(*down));
        for e in middle {
            self.deliver(*e, out)?;
        }
        out.push(InterposerDecision::Block(*up));
        let step = self.spec.step_interval_ms;
        let start = up.t_ms.max(self.busy_until) + step;
        self.inject(set, start, out)?;
        self.inject(click, self.busy_until + step, out)?;
        self.inject(restore, self.busy_until + step, out)?;
        self.phase = Phase::Done;
        Ok(())
    }

    /// Set-value, confirm, and restore-value plans from the current region.
    fn strike_plans(&self) -> Result<(Vec<InputEvent>, Vec<InputEvent>, Vec<InputEvent>), AttackError> {
        let state = self.target.state.clone();
        let set = self.plan(&state, &self.spec.malicious_value)?;
        let click = vec![InputEvent::down(0), InputEvent::up(0)];
        let after = self.target.confirmation.transition_to.clone().unwrap_or(state);
        let restore = if self.model.element(&after, &self.target.element.id).is_ok() {
            self.plan(&after, &self.belief.value)?
        } else {
            Vec::new()
        };
        Ok((set, click, restore))
    }

    /// Releases anything still held at the end of the stream.
    pub fn finish(&mut self) -> Result<Vec<InterposerDecision>, AttackError> {
        let mut out = Vec::new();
        if let Phase::Holding(held) = std::mem::replace(&mut self.phase, Phase::Armed) {
            for e in held {
                self.deliver(e, &mut out)?;
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackOutcome {
    pub launched: bool,
    /// The committed target value equals the malicious value.
    pub success: bool,
    /// Time the terminal showed a target value different from the one the
    /// user's own input produces.
    pub visible_ms: u64,
    pub injected_event_count: u64,
    /// The terminal's final target value equals the user's.
    pub user_value_shown: bool,
    /// The cursor matched the user-only replay after every injection.
    pub cursor_restored: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackRun {
    pub outcome: AttackOutcome,
    /// The user edited the target element while attack_ready held.
    pub edit_seen: bool,
    pub decisions: Vec<InterposerDecision>,
}

impl AttackRun {
    pub fn log(&self) -> String {
        let mut s = String::new();
        for d in &self.decisions {
            for line in d.log_lines() {
                s.push_str(&line);
                s.push('\n');
            }
        }
        s
    }

    pub fn delivered(&self) -> Vec<InputEvent> {
        self.decisions.iter().flat_map(InterposerDecision::delivered).collect()
    }

    /// The delivered stream as a trace.
    pub fn delivered_trace(&self, source: &Trace) -> Trace {
        Trace { meta: source.meta.clone(), events: self.delivered() }
    }
}

/// Scores a decision list against two oracles: one fed everything the
/// terminal received, one fed only the user's own events.
pub fn score(model: &UiModel, spec: &AttackSpec, decisions: &[InterposerDecision], launched: bool, boot: Option<TerminalState>) -> AttackOutcome {
    let target = &spec.target_element;
    let mut attacked = boot.clone().unwrap_or_else(|| TerminalState::boot(model));
    let mut user = boot.unwrap_or_else(|| TerminalState::boot(model));
    let differs = |a: &TerminalState, u: &TerminalState| match (a.value(target), u.value(target)) {
        (Some(x), Some(y)) => !x.matches(y),
        (x, y) => x.is_some() != y.is_some(),
    };
    let mut visible = 0;
    let mut last: Option<(u64, bool)> = None;
    let mut cursor_restored = true;
    let mut injected = 0;
    let mut mark = |t: u64, now: bool, last: &mut Option<(u64, bool)>| {
        if let Some((t0, true)) = *last {
            visible += t.saturating_sub(t0);
        }
        *last = Some((t, now));
    };
    for d in decisions {
        match d {
            InterposerDecision::Pass(_) | InterposerDecision::Delay(..) => {
                for e in d.delivered() {
                    attacked.apply(model, &e);
                    user.apply(model, &e);
                    mark(e.t_ms, differs(&attacked, &user), &mut last);
                }
            }
            InterposerDecision::Block(e) => {
                user.apply(model, e);
                mark(e.t_ms, differs(&attacked, &user), &mut last);
            }
            InterposerDecision::Inject(es) => {
                for e in es {
                    attacked.apply(model, e);
                    mark(e.t_ms, differs(&attacked, &user), &mut last);
                }
                injected += es.len() as u64;
                cursor_restored &= attacked.cursor == user.cursor;
            }
        }
    }
    let success = launched
        && attacked.committed.get(target).is_some_and(|v| v.matches(&spec.malicious_value));
    AttackOutcome {
        launched,
        success,
        visible_ms: visible,
        injected_event_count: injected,
        user_value_shown: !differs(&attacked, &user),
        cursor_restored: cursor_restored && attacked.cursor == user.cursor,
    }
}

/// Feeds a trace through a fresh session and scores the result.
pub fn run_attack(
    model: &Arc<UiModel>,
    trace: &Trace,
    spec: &AttackSpec,
    cfg: EstimatorConfig,
    boot: Option<TerminalState>,
) -> Result<AttackRun, AttackError> {
    let mut session = Session::new(model.clone(), spec.clone(), cfg)?;
    let mut decisions = Vec::new();
    for e in &trace.events {
        decisions.extend(session.interpose(e)?);
    }
    decisions.extend(session.finish()?);
    let outcome = score(model, spec, &decisions, session.launched(), boot);
    Ok(AttackRun { outcome, edit_seen: session.edit_seen(), decisions })
}
