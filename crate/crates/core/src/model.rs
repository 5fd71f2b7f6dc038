//! Static model of the target terminal's user interface.
//!
//! The model file is TOML with `model_version = 1`; field names mirror the
//! types below. Element values are keyed by element id across the whole
//! model, so elements that share an id in different states are the same
//! control (for example a settings screen re-rendered with a banner).

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
pub use crate::geometry::{Point, Rect};
use crate::trace::KeyCode;

pub const MODEL_VERSION: u32 = 1;

/// Bundled pacemaker-programmer model.
pub const PACEMAKER_MODEL: &str = include_str!("../../../models/pacemaker.model");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementKind {
    Button,
    TextField,
    Slider,
    MultipleChoice,
}

impl ElementKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ElementKind::Button => "button",
            ElementKind::TextField => "text_field",
            ElementKind::Slider => "slider",
            ElementKind::MultipleChoice => "multiple_choice",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueDomain {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl ValueDomain {
    /// Number of step increments between `min` and `max`.
    pub fn steps(&self) -> i64 {
        ((self.max - self.min) / self.step).round() as i64
    }

    pub fn value_at(&self, k: i64) -> f64 {
        let v = self.min + k.clamp(0, self.steps()) as f64 * self.step;
        // keep decimal steps printable (0.1 + 0.2 style drift)
        (v * 1e9).round() / 1e9
    }

    /// Nearest step index for `v`.
    pub fn step_of(&self, v: f64) -> i64 {
        (((v - self.min) / self.step).round() as i64).clamp(0, self.steps())
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.min - 1e-9 && v <= self.max + 1e-9
    }

    pub fn on_grid(&self, v: f64) -> bool {
        let k = (v - self.min) / self.step;
        (k - k.round()).abs() < 1e-6
    }
}

/// Element value: a number (sliders) or text (text fields, choices).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Number(f64),
    Text(String),
}

impl Value {
    pub fn as_number(&self) -> Option<f64> {
        match self {
            Value::Number(n) => Some(*n),
            Value::Text(s) => s.trim().parse().ok(),
        }
    }

    /// Text as it would be typed into a field.
    pub fn to_text(&self) -> String {
        match self {
            Value::Number(n) => format_number(*n),
            Value::Text(s) => s.clone(),
        }
    }

    /// Equality across representations: numbers compare numerically,
    /// text compares exactly.
    pub fn matches(&self, other: &Value) -> bool {
        match (self, other) {
            (Value::Text(a), Value::Text(b)) => a == b,
            _ => match (self.as_number(), other.as_number()) {
                (Some(a), Some(b)) => (a - b).abs() < 1e-9,
                _ => false,
            },
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Number(n) => f.write_str(&format_number(*n)),
            Value::Text(s) => write!(f, "{s:?}"),
        }
    }
}

pub fn format_number(n: f64) -> String {
    if n.fract() == 0.0 && n.abs() < 1e15 {
        format!("{}", n as i64)
    } else {
        format!("{n}")
    }
}

fn one() -> f64 {
    1.0
}

fn is_false(b: &bool) -> bool {
    !*b
}

fn is_one(w: &f64) -> bool {
    *w == 1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UiElement {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub kind: ElementKind,
    pub rect: Rect,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transition_to: Option<String>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub is_target: bool,
    #[serde(default, skip_serializing_if = "is_false")]
    pub is_confirmation: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value_domain: Option<ValueDomain>,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub a_priori_weight: f64,
    /// Keys that clear a text field before typing a new value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clear_keys: Option<Vec<KeyCode>>,
    /// Mutually exclusive choice group (multiple_choice only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
}

impl UiElement {
    pub fn new(id: &str, kind: ElementKind, rect: Rect) -> Self {
        Self {
            id: id.to_string(),
            label: None,
            kind,
            rect,
            transition_to: None,
            is_target: false,
            is_confirmation: false,
            value_domain: None,
            a_priori_weight: 1.0,
            clear_keys: None,
            group: None,
        }
    }

    pub fn with_transition(mut self, to: &str) -> Self {
        self.transition_to = Some(to.to_string());
        self
    }

    pub fn with_domain(mut self, min: f64, max: f64, step: f64) -> Self {
        self.value_domain = Some(ValueDomain { min, max, step });
        self
    }

    pub fn is_transition(&self) -> bool {
        self.transition_to.is_some()
    }

    pub fn default_clear_keys(&self) -> Vec<KeyCode> {
        self.clear_keys
            .clone()
            .unwrap_or_else(|| vec![KeyCode::SelectAll, KeyCode::Backspace])
    }

    /// Initial value before any interaction.
    pub fn initial_value(&self) -> Option<Value> {
        match (self.kind, &self.value_domain) {
            (ElementKind::Slider, Some(d)) => Some(Value::Number(d.min)),
            (ElementKind::TextField, _) => Some(Value::Text(String::new())),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UiState {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default)]
    pub elements: Vec<UiElement>,
}

impl UiState {
    pub fn element(&self, id: &str) -> Option<&UiElement> {
        self.elements.iter().find(|e| e.id == id)
    }

    pub fn transitions(&self) -> impl Iterator<Item = &UiElement> {
        self.elements.iter().filter(|e| e.is_transition())
    }

    /// The element hit by a press at `p`: the transition-bearing element
    /// containing `p` if any, else the first other element containing it.
    pub fn element_at(&self, p: Point) -> Option<&UiElement> {
        self.elements
            .iter()
            .find(|e| e.is_transition() && e.rect.contains(p))
            .or_else(|| self.elements.iter().find(|e| !e.is_transition() && e.rect.contains(p)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UiModel {
    pub model_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub screen_width: i32,
    pub screen_height: i32,
    pub start_state: String,
    #[serde(default)]
    pub target_states: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_cursor: Option<Point>,
    pub states: Vec<UiState>,
}

/// One invariant violation, naming the offending state/element.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub state: Option<String>,
    pub element: Option<String>,
    pub rule: &'static str,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.state, &self.element) {
            (Some(s), Some(e)) => write!(f, "state `{s}` element `{e}`: ")?,
            (Some(s), None) => write!(f, "state `{s}`: ")?,
            _ => {}
        }
        write!(f, "{} ({})", self.detail, self.rule)
    }
}

impl UiModel {
    /// A model with one empty state of the given screen size.
    pub fn minimal(width: i32, height: i32) -> Self {
        Self {
            model_version: MODEL_VERSION,
            name: None,
            screen_width: width,
            screen_height: height,
            start_state: "main".into(),
            target_states: vec![],
            initial_cursor: None,
            states: vec![UiState { id: "main".into(), label: None, elements: vec![] }],
        }
    }

    pub fn pacemaker() -> Self {
        load_model(PACEMAKER_MODEL).expect("bundled pacemaker model is valid")
    }

    pub fn screen(&self) -> Rect {
        Rect::new(0, 0, self.screen_width, self.screen_height)
    }

    pub fn screen_area(&self) -> u64 {
        self.screen().area()
    }

    pub fn state(&self, id: &str) -> Option<&UiState> {
        self.states.iter().find(|s| s.id == id)
    }

    pub fn state_index(&self, id: &str) -> Option<usize> {
        self.states.iter().position(|s| s.id == id)
    }

    pub fn require_state(&self, id: &str) -> Result<&UiState, ModelError> {
        self.state(id).ok_or_else(|| ModelError::UnknownState(id.to_string()))
    }

    pub fn element(&self, state: &str, element: &str) -> Result<&UiElement, ModelError> {
        self.require_state(state)?
            .element(element)
            .ok_or_else(|| ModelError::UnknownElement { state: state.into(), element: element.into() })
    }

    /// First element with this id in any state.
    pub fn find_element(&self, element: &str) -> Option<(&UiState, &UiElement)> {
        self.states
            .iter()
            .find_map(|s| s.element(element).map(|e| (s, e)))
    }

    pub fn is_target_state(&self, id: &str) -> bool {
        self.target_states.iter().any(|s| s == id)
    }

    /// Element hit by a press at `p` in `state`.
    pub fn element_at(&self, state: &str, p: Point) -> Result<Option<&UiElement>, ModelError> {
        Ok(self.require_state(state)?.element_at(p))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("model serializes")
    }

    pub fn load_file(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| ModelError::Syntax(format!("{}: {e}", path.as_ref().display())))?;
        load_model(&text)
    }
}

/// Parse and validate a model document.
pub fn load_model(text: &str) -> Result<UiModel, ModelError> {
    let model: UiModel = toml::from_str(text).map_err(|e| ModelError::Syntax(e.to_string()))?;
    if model.model_version != MODEL_VERSION {
        return Err(ModelError::Version(model.model_version));
    }
    let violations = validate(&model);
    if violations.is_empty() {
        Ok(model)
    } else {
        Err(ModelError::Invalid(violations))
    }
}

pub fn serialize_model(model: &UiModel) -> String {
    model.to_toml()
}

pub fn validate(model: &UiModel) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |state: Option<&str>, element: Option<&str>, rule: &'static str, detail: String| {
        out.push(Violation {
            state: state.map(str::to_string),
            element: element.map(str::to_string),
            rule,
            detail,
        })
    };

    if model.screen_width <= 0 || model.screen_height <= 0 {
        push(None, None, "screen", format!(
            "screen dimensions must be positive, got {}x{}",
            model.screen_width, model.screen_height
        ));
    }
    let screen = model.screen();

    let mut ids = HashSet::new();
    for s in &model.states {
        if !ids.insert(s.id.as_str()) {
            push(Some(&s.id), None, "unique-state", "duplicate state id".into());
        }
    }
    if model.state(&model.start_state).is_none() {
        push(None, None, "start-state", format!("start_state `{}` does not exist", model.start_state));
    }
    for t in &model.target_states {
        if model.state(t).is_none() {
            push(None, None, "target-state", format!("target state `{t}` does not exist"));
        }
    }
    if let Some(c) = model.initial_cursor {
        if !screen.contains(c) {
            push(None, None, "initial-cursor", format!("initial cursor ({},{}) is off screen", c.x, c.y));
        }
    }

    for s in &model.states {
        let sid = Some(s.id.as_str());
        let mut eids = HashSet::new();
        for e in &s.elements {
            let eid = Some(e.id.as_str());
            if !eids.insert(e.id.as_str()) {
                push(sid, eid, "unique-element", "duplicate element id".into());
            }
            if e.rect.w < 0 || e.rect.h < 0 {
                push(sid, eid, "rect", format!("negative size {}", e.rect));
            } else if !screen.contains_rect(&e.rect) || e.rect.x < 0 || e.rect.y < 0 {
                push(sid, eid, "on-screen", format!("rect {} extends past the screen", e.rect));
            }
            if let Some(to) = &e.transition_to {
                if !matches!(e.kind, ElementKind::Button | ElementKind::MultipleChoice) {
                    push(sid, eid, "transition-kind", format!("{} cannot carry a transition", e.kind.as_str()));
                }
                if model.state(to).is_none() {
                    push(sid, eid, "transition-target", format!("transition to missing state `{to}`"));
                }
            }
            if e.is_confirmation && e.kind != ElementKind::Button {
                push(sid, eid, "confirmation-kind", "confirmation element must be a button".into());
            }
            let needs_domain = matches!(e.kind, ElementKind::TextField | ElementKind::Slider);
            match (&e.value_domain, needs_domain) {
                (None, true) => push(sid, eid, "value-domain", "value_domain required".into()),
                (Some(_), false) => push(sid, eid, "value-domain", "value_domain only allowed on text fields and sliders".into()),
                (Some(d), true) => {
                    if !(d.min <= d.max) || !(d.step > 0.0) || !d.min.is_finite() || !d.max.is_finite() {
                        push(sid, eid, "value-domain", format!("bad domain ({}, {}, {})", d.min, d.max, d.step));
                    } else if e.kind == ElementKind::Slider {
                        if !d.on_grid(d.max) {
                            push(sid, eid, "value-domain", "slider range is not a whole number of steps".into());
                        } else if (e.rect.w as i64 - 1) < d.steps() {
                            push(sid, eid, "slider-width", format!(
                                "slider of width {} cannot resolve {} steps", e.rect.w, d.steps()
                            ));
                        }
                    }
                }
                (None, false) => {}
            }
            if e.clear_keys.is_some() && e.kind != ElementKind::TextField {
                push(sid, eid, "clear-keys", "clear_keys only allowed on text fields".into());
            }
            if e.group.is_some() && e.kind != ElementKind::MultipleChoice {
                push(sid, eid, "group", "group only allowed on multiple_choice".into());
            }
            if !(e.a_priori_weight >= 0.0) || !e.a_priori_weight.is_finite() {
                push(sid, eid, "a-priori-weight", format!("weight {} must be finite and >= 0", e.a_priori_weight));
            }
        }
        let trans: Vec<&UiElement> = s.transitions().collect();
        for (i, a) in trans.iter().enumerate() {
            for b in &trans[i + 1..] {
                if a.rect.intersects(&b.rect) {
                    push(sid, Some(&a.id), "deterministic", format!(
                        "transition elements `{}` and `{}` overlap", a.id, b.id
                    ));
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> UiModel {
        let mut m = UiModel::minimal(100, 100);
        m.states[0].elements.push(UiElement::new("go", ElementKind::Button, Rect::new(10, 10, 20, 10)).with_transition("other"));
        m.states.push(UiState { id: "other".into(), label: None, elements: vec![] });
        m
    }

    #[test]
    fn bundled_model_is_valid() {
        let m = UiModel::pacemaker();
        assert!(validate(&m).is_empty());
        assert!((9..=12).contains(&m.states.len()), "about ten states, got {}", m.states.len());
        let kinds: HashSet<ElementKind> = m.states.iter().flat_map(|s| s.elements.iter().map(|e| e.kind)).collect();
        assert!(kinds.contains(&ElementKind::Button));
        assert!(kinds.contains(&ElementKind::TextField));
        assert!(kinds.contains(&ElementKind::Slider));
        for label in ["Threshold", "Amplitude", "Rate", "Program Pacemaker", "Complete Task"] {
            assert!(
                m.states.iter().flat_map(|s| &s.elements).any(|e| e.label.as_deref() == Some(label)),
                "missing {label}"
            );
        }
    }

    #[test]
    fn minimal_model_loads() {
        let text = "model_version = 1\nscreen_width = 10\nscreen_height = 10\nstart_state = \"a\"\n[[states]]\nid = \"a\"\n";
        let m = load_model(text).unwrap();
        assert_eq!(m.states.len(), 1);
        assert!(m.states[0].elements.is_empty());
    }

    #[test]
    fn missing_transition_target_is_named() {
        let mut m = toy();
        m.states.pop();
        let text = m.to_toml();
        match load_model(&text) {
            Err(ModelError::Invalid(v)) => {
                assert_eq!(v.len(), 1);
                assert_eq!(v[0].rule, "transition-target");
                assert_eq!(v[0].element.as_deref(), Some("go"));
                assert!(v[0].to_string().contains("other"));
            }
            other => panic!("expected semantic error, got {other:?}"),
        }
    }

    #[test]
    fn syntax_error() {
        assert!(matches!(load_model("model_version = = 1"), Err(ModelError::Syntax(_))));
    }

    #[test]
    fn overlapping_transition_buttons() {
        let mut m = toy();
        m.states[0].elements.push(UiElement::new("go2", ElementKind::Button, Rect::new(25, 15, 20, 10)).with_transition("other"));
        let v = validate(&m);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, "deterministic");
        // non-transition elements may overlap freely
        let mut m = toy();
        m.states[0].elements.push(UiElement::new("s", ElementKind::Slider, Rect::new(0, 0, 100, 30)).with_domain(0.0, 10.0, 1.0));
        assert!(validate(&m).is_empty());
    }

    #[test]
    fn off_screen_element() {
        let mut m = toy();
        m.states[1].elements.push(UiElement::new("wide", ElementKind::Button, Rect::new(90, 0, 20, 10)));
        let v = validate(&m);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, "on-screen");
    }

    #[test]
    fn element_at_half_open() {
        let m = toy();
        assert_eq!(m.element_at("main", Point::new(15, 15)).unwrap().map(|e| e.id.as_str()), Some("go"));
        assert!(m.element_at("main", Point::new(50, 50)).unwrap().is_none());
        assert!(m.element_at("main", Point::new(30, 15)).unwrap().is_none());
        assert!(m.element_at("main", Point::new(29, 19)).unwrap().is_some());
        assert!(matches!(m.element_at("nope", Point::new(0, 0)), Err(ModelError::UnknownState(_))));
    }

    #[test]
    fn element_at_prefers_transition_element() {
        let mut m = toy();
        m.states[0].elements.insert(0, UiElement::new("bg", ElementKind::TextField, Rect::new(0, 0, 100, 100)).with_domain(0.0, 1.0, 0.1));
        assert_eq!(m.element_at("main", Point::new(12, 12)).unwrap().unwrap().id, "go");
        assert_eq!(m.element_at("main", Point::new(50, 50)).unwrap().unwrap().id, "bg");
    }

    #[test]
    fn domain_rules() {
        let mut m = toy();
        m.states[1].elements.push(UiElement::new("t", ElementKind::TextField, Rect::new(0, 0, 10, 10)));
        m.states[1].elements.push(UiElement::new("b", ElementKind::Button, Rect::new(20, 0, 10, 10)).with_domain(0.0, 1.0, 1.0));
        m.states[1].elements.push(UiElement::new("s", ElementKind::Slider, Rect::new(40, 0, 10, 10)).with_domain(0.0, 100.0, 1.0));
        let rules: Vec<&str> = validate(&m).iter().map(|v| v.rule).collect();
        assert_eq!(rules, vec!["value-domain", "value-domain", "slider-width"]);
    }

    #[test]
    fn bundled_round_trip() {
        let m = UiModel::pacemaker();
        assert_eq!(load_model(&serialize_model(&m)).unwrap(), m);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_model() -> impl Strategy<Value = UiModel> {
            (1usize..5, 40..200i32, 40..200i32, any::<u64>()).prop_map(|(n, w, h, seed)| {
                use rand::{Rng, SeedableRng};
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                let mut m = UiModel::minimal(w, h);
                m.states.clear();
                for i in 0..n {
                    m.states.push(UiState { id: format!("s{i}"), label: (i % 2 == 0).then(|| format!("State {i}")), elements: vec![] });
                }
                m.start_state = "s0".into();
                m.target_states = vec![format!("s{}", n - 1)];
                m.initial_cursor = rng.gen_bool(0.5).then(|| Point::new(rng.gen_range(0..w), rng.gen_range(0..h)));
                for i in 0..n {
                    // transition buttons on a grid so they never overlap
                    let cols = (w / 20).max(1);
                    for j in 0..rng.gen_range(0..4) {
                        let cx = (j % cols) * 20;
                        let cy = (j / cols) * 20;
                        if cy + 10 > h { break; }
                        let mut e = UiElement::new(&format!("b{j}"), ElementKind::Button, Rect::new(cx, cy, 15, 10))
                            .with_transition(&format!("s{}", rng.gen_range(0..n)));
                        e.a_priori_weight = [1.0, 0.5, 2.25][rng.gen_range(0..3)];
                        e.is_confirmation = rng.gen_bool(0.2);
                        m.states[i].elements.push(e);
                    }
                    if rng.gen_bool(0.5) {
                        let mut t = UiElement::new("t", ElementKind::TextField, Rect::new(0, h - 10, w / 2, 10)).with_domain(0.0, 9.5, 0.5);
                        t.is_target = true;
                        if rng.gen_bool(0.5) { t.clear_keys = Some(vec![KeyCode::End, KeyCode::Backspace]); }
                        m.states[i].elements.push(t);
                    }
                    if rng.gen_bool(0.5) {
                        m.states[i].elements.push(UiElement::new("sl", ElementKind::Slider, Rect::new(0, h - 20, w, 10)).with_domain(-1.0, 2.0, 0.25));
                    }
                }
                m
            })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn serialize_load_round_trip(m in arb_model()) {
                prop_assert!(validate(&m).is_empty(), "{:?}", validate(&m));
                let back = load_model(&serialize_model(&m)).unwrap();
                prop_assert_eq!(back, m);
            }

            #[test]
            fn at_most_one_transition_element_per_point(m in arb_model(), x in 0..200i32, y in 0..200i32) {
                for s in &m.states {
                    let hits = s.transitions().filter(|e| e.rect.contains(Point::new(x, y))).count();
                    prop_assert!(hits <= 1);
                }
            }
        }
    }
}
