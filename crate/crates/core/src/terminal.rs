//! Ground-truth terminal simulator.
//!
//! Gesture rules shared with the estimator:
//! - a press activates the element under the cursor at button-down, on
//!   button-up, when the summed raw horizontal motion during the press is
//!   below the drag threshold;
//! - a slider press followed by motion changes the value by the cursor
//!   displacement since the press, `k = clamp(k0 + round(dx * n / (w - 1)))`
//!   over the `n` steps of the domain;
//! - text fields take focus on click; keys without focus are dropped.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geometry::Point;
use crate::model::{ElementKind, UiElement, UiModel, UiState, Value};
use crate::trace::{InputEvent, KeyCode, Payload, Trace};

/// Horizontal displacement separating a drag from a click.
pub const DEFAULT_DRAG_THRESHOLD: i32 = 10;

/// Slider step index after a cursor displacement of `dx` from a press at
/// step `k0`.
pub fn slider_step(k0: i64, dx: i64, steps: i64, width: i32) -> i64 {
    let span = (width - 1).max(1) as i64;
    // round half away from zero, in integers
    let num = dx * steps;
    let q = if num >= 0 { (2 * num + span) / (2 * span) } else { -((-2 * num + span) / (2 * span)) };
    (k0 + q).clamp(0, steps)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Press {
    /// Cursor at button-down.
    pub at: Point,
    /// Element under the cursor at button-down.
    pub element: Option<String>,
    /// Raw horizontal motion since button-down (signed sum of deltas).
    pub raw_dx: i64,
    /// Slider step at button-down when pressing a slider.
    pub slider_k0: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerminalState {
    pub state: String,
    pub cursor: Point,
    pub focused: Option<String>,
    /// Focused text is fully selected; the next key replaces it.
    pub selected: bool,
    pub values: BTreeMap<String, Value>,
    pub committed: BTreeMap<String, Value>,
    pub press: Option<Press>,
    /// Number of events applied so far.
    pub applied: u64,
}

/// What an event did, for harnesses that attribute changes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Effect {
    pub activated: Option<String>,
    pub transition: Option<(String, String)>,
    pub changed: Vec<String>,
    pub committed: bool,
}

impl TerminalState {
    /// Post-boot state: start state, initial cursor (or origin), initial values.
    pub fn boot(model: &UiModel) -> Self {
        let mut values = BTreeMap::new();
        for s in &model.states {
            for e in &s.elements {
                if let Some(v) = e.initial_value() {
                    values.entry(e.id.clone()).or_insert(v);
                }
            }
        }
        Self {
            state: model.start_state.clone(),
            cursor: model.initial_cursor.unwrap_or(Point::new(0, 0)),
            focused: None,
            selected: false,
            values,
            committed: BTreeMap::new(),
            press: None,
            applied: 0,
        }
    }

    pub fn value(&self, element: &str) -> Option<&Value> {
        self.values.get(element)
    }

    fn ui<'m>(&self, model: &'m UiModel) -> &'m UiState {
        model.state(&self.state).expect("terminal state exists in model")
    }

    /// Applies one event with the default drag threshold.
    pub fn apply(&mut self, model: &UiModel, e: &InputEvent) -> Effect {
        self.apply_with(model, e, DEFAULT_DRAG_THRESHOLD)
    }

    pub fn apply_with(&mut self, model: &UiModel, e: &InputEvent, drag_threshold: i32) -> Effect {
        let screen = model.screen();
        let mut fx = Effect::default();
        self.applied += 1;
        match e.payload {
            Payload::Move { dx, dy } => {
                let to = Point::new(self.cursor.x.saturating_add(dx), self.cursor.y.saturating_add(dy));
                self.cursor = screen.clamp_point(to);
                if let Some(p) = &mut self.press {
                    p.raw_dx += dx as i64;
                }
                self.track_slider(model, &mut fx);
            }
            Payload::TouchMove { x, y } => {
                self.cursor = screen.clamp_point(Point::new(x, y));
                if let Some(p) = &mut self.press {
                    p.raw_dx = (x - p.at.x) as i64;
                }
                self.track_slider(model, &mut fx);
            }
            Payload::Down => self.press_at(model),
            Payload::TouchDown { x, y } => {
                self.cursor = screen.clamp_point(Point::new(x, y));
                self.press_at(model);
            }
            Payload::Up => self.release(model, drag_threshold, &mut fx),
            Payload::TouchUp { x, y } => {
                self.cursor = screen.clamp_point(Point::new(x, y));
                if let Some(p) = &mut self.press {
                    p.raw_dx = (x - p.at.x) as i64;
                }
                self.track_slider(model, &mut fx);
                self.release(model, drag_threshold, &mut fx);
            }
            Payload::Key { key } => self.key(model, key, &mut fx),
            Payload::Boot => {
                let committed = std::mem::take(&mut self.committed);
                let applied = self.applied;
                let from = std::mem::take(&mut self.state);
                *self = TerminalState::boot(model);
                self.committed = committed;
                self.applied = applied;
                if from != self.state {
                    fx.transition = Some((from, self.state.clone()));
                }
            }
        }
        fx
    }

    fn press_at(&mut self, model: &UiModel) {
        if self.press.is_some() {
            return;
        }
        let el = self.ui(model).element_at(self.cursor);
        let slider_k0 = el.filter(|e| e.kind == ElementKind::Slider).and_then(|e| {
            let d = e.value_domain?;
            Some(d.step_of(self.values.get(&e.id)?.as_number()?))
        });
        self.press = Some(Press { at: self.cursor, element: el.map(|e| e.id.clone()), raw_dx: 0, slider_k0 });
    }

    fn track_slider(&mut self, model: &UiModel, fx: &mut Effect) {
        let Some(Press { at, element: Some(id), slider_k0: Some(k0), .. }) = &self.press else {
            return;
        };
        let Some(el) = self.ui(model).element(id) else { return };
        let d = el.value_domain.expect("slider has a domain");
        let k = slider_step(*k0, (self.cursor.x - at.x) as i64, d.steps(), el.rect.w);
        let v = Value::Number(d.value_at(k));
        if self.values.get(id).map_or(true, |old| !old.matches(&v)) {
            fx.changed.push(id.clone());
            self.values.insert(id.clone(), v);
        }
    }

    fn release(&mut self, model: &UiModel, drag_threshold: i32, fx: &mut Effect) {
        let Some(press) = self.press.take() else { return };
        let is_click = press.raw_dx.abs() < drag_threshold as i64;
        let el = press.element.as_deref().and_then(|id| self.ui(model).element(id)).cloned();
        match el {
            Some(el) if is_click => self.activate(model, &el, fx),
            _ => self.unfocus(),
        }
    }

    fn unfocus(&mut self) {
        self.focused = None;
        self.selected = false;
    }

    fn activate(&mut self, model: &UiModel, el: &UiElement, fx: &mut Effect) {
        fx.activated = Some(el.id.clone());
        if el.kind == ElementKind::TextField {
            if self.focused.as_deref() != Some(&el.id) {
                self.focused = Some(el.id.clone());
                self.selected = false;
            }
            return;
        }
        self.unfocus();
        if el.kind == ElementKind::MultipleChoice {
            let key = el.group.clone().unwrap_or_else(|| el.id.clone());
            let v = Value::Text(el.id.clone());
            if self.values.get(&key) != Some(&v) {
                self.values.insert(key.clone(), v);
                fx.changed.push(key);
            }
        }
        if el.is_confirmation {
            let ui = self.ui(model);
            for t in ui.elements.iter().filter(|t| t.is_target) {
                if let Some(v) = self.values.get(&t.id) {
                    self.committed.insert(t.id.clone(), v.clone());
                }
            }
            fx.committed = true;
        }
        if let Some(to) = &el.transition_to {
            let from = std::mem::replace(&mut self.state, to.clone());
            fx.transition = Some((from, to.clone()));
        }
    }

    fn key(&mut self, model: &UiModel, key: KeyCode, fx: &mut Effect) {
        let Some(id) = self.focused.clone() else { return };
        let Some(el) = self.ui(model).element(&id) else { return };
        let numeric = el.value_domain.is_some();
        let mut text = self.values.get(&id).map(|v| v.to_text()).unwrap_or_default();
        if edit_text(&mut text, &mut self.selected, key, numeric) {
            self.values.insert(id.clone(), Value::Text(text));
            fx.changed.push(id);
        }
    }
}

/// Applies one key to a focused field's text. Returns true when the text
/// changed.
pub fn edit_text(text: &mut String, selected: &mut bool, key: KeyCode, numeric: bool) -> bool {
    let before = text.clone();
    match key {
        KeyCode::SelectAll => {
            *selected = !text.is_empty();
            return false;
        }
        KeyCode::Backspace | KeyCode::Delete => {
            if *selected {
                text.clear();
            } else if key == KeyCode::Backspace {
                text.pop();
            }
        }
        KeyCode::Char(c) if !c.is_control() => {
            if numeric && !(c.is_ascii_digit() || c == '.') {
                return false;
            }
            if *selected {
                text.clear();
            }
            text.push(c);
        }
        _ => {}
    }
    *selected = false;
    *text != before
}

/// Rect of the slider thumb for the current value (for display and
/// synthetic users grabbing the thumb).
pub fn slider_thumb_x(el: &UiElement, value: f64) -> i32 {
    let d = el.value_domain.expect("slider has a domain");
    let n = d.steps().max(1);
    let k = d.step_of(value);
    el.rect.x + ((k * (el.rect.w - 1) as i64 + n / 2) / n) as i32
}

/// Pure form of [`TerminalState::apply`].
pub fn apply_event(model: &UiModel, t: &TerminalState, e: &InputEvent) -> TerminalState {
    let mut next = t.clone();
    next.apply(model, e);
    next
}

/// States after each event, starting with the boot state.
pub fn run_trace(model: &UiModel, trace: &Trace, boot: Option<TerminalState>) -> Vec<TerminalState> {
    let mut t = boot.unwrap_or_else(|| TerminalState::boot(model));
    let mut out = Vec::with_capacity(trace.events.len() + 1);
    out.push(t.clone());
    for e in &trace.events {
        t.apply(model, e);
        out.push(t.clone());
    }
    out
}

/// Final state after a trace, without keeping intermediate states.
pub fn run_final(model: &UiModel, events: &[InputEvent], boot: Option<TerminalState>) -> TerminalState {
    let mut t = boot.unwrap_or_else(|| TerminalState::boot(model));
    for e in events {
        t.apply(model, e);
    }
    t
}
