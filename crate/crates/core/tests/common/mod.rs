//! Helpers shared by the integration tests: random toy models, random
//! short traces and an outcome-tree enumeration oracle working on explicit
//! pixel sets.

#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::Rng;

use blindtrack::estimator::{EstimatorConfig, TransitionScheme};
use blindtrack::model::{ElementKind, Point, Rect, UiElement, UiModel, UiState, MODEL_VERSION};
use blindtrack::trace::{InputEvent, KeyCode, Payload, Trace};

pub type Pixels = BTreeSet<(i32, i32)>;

pub fn rect_in<R: Rng>(rng: &mut R, w: i32, h: i32, max_side: i32) -> Rect {
    let rw = rng.gen_range(1..=max_side.min(w));
    let rh = rng.gen_range(1..=max_side.min(h));
    Rect::new(rng.gen_range(0..=w - rw), rng.gen_range(0..=h - rh), rw, rh)
}

/// 3 or 4 states on a screen of at most 24x24, each with one to three
/// non-overlapping transition buttons and optionally a plain button, a
/// slider and a text field.
pub fn toy_model<R: Rng>(rng: &mut R) -> UiModel {
    let w = rng.gen_range(10..=24);
    let h = rng.gen_range(10..=24);
    let n = rng.gen_range(3..=4);
    let ids: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
    let states = (0..n)
        .map(|i| {
            let mut elements: Vec<UiElement> = Vec::new();
            let want = rng.gen_range(1..=3);
            let mut tries = 0;
            while elements.len() < want && tries < 50 {
                tries += 1;
                let r = rect_in(rng, w, h, 9);
                if elements.iter().any(|e| e.rect.intersects(&r)) {
                    continue;
                }
                let to = &ids[rng.gen_range(0..n)];
                let mut b = UiElement::new(&format!("b{}", elements.len()), ElementKind::Button, r).with_transition(to);
                b.a_priori_weight = rng.gen_range(1..=4) as f64;
                elements.push(b);
            }
            if rng.gen_bool(0.5) {
                elements.push(UiElement::new("plain", ElementKind::Button, rect_in(rng, w, h, 8)));
            }
            if rng.gen_bool(0.5) {
                let mut r = rect_in(rng, w, h, 10);
                r.w = r.w.max(5).min(w - r.x);
                if r.w >= 5 {
                    elements.push(UiElement::new("slider", ElementKind::Slider, r).with_domain(0.0, 4.0, 1.0));
                }
            }
            if rng.gen_bool(0.5) {
                elements.push(UiElement::new("field", ElementKind::TextField, rect_in(rng, w, h, 8)).with_domain(0.0, 99.0, 1.0));
            }
            UiState { id: ids[i].clone(), label: None, elements }
        })
        .collect();
    let m = UiModel {
        model_version: MODEL_VERSION,
        name: Some("toy".into()),
        screen_width: w,
        screen_height: h,
        start_state: ids[0].clone(),
        target_states: vec![],
        initial_cursor: None,
        states,
    };
    assert!(blindtrack::model::validate(&m).is_empty(), "toy model invalid: {:?}", blindtrack::model::validate(&m));
    m
}

/// At most `max_presses` presses (clicks or drags) with moves and typing
/// in between.
pub fn toy_trace<R: Rng>(rng: &mut R, max_presses: usize) -> Trace {
    let mut t = 0u64;
    let mut ev = Vec::new();
    let mut push = |ev: &mut Vec<InputEvent>, p: Payload| {
        t += 40;
        ev.push(InputEvent::new(t, p));
    };
    let presses = rng.gen_range(1..=max_presses);
    for _ in 0..presses {
        for _ in 0..rng.gen_range(0..3) {
            push(&mut ev, Payload::Move { dx: rng.gen_range(-9..=9), dy: rng.gen_range(-9..=9) });
        }
        if rng.gen_bool(0.2) {
            push(&mut ev, Payload::Key { key: KeyCode::Char('5') });
            push(&mut ev, Payload::Key { key: KeyCode::Char('1') });
        }
        push(&mut ev, Payload::Down);
        if rng.gen_bool(0.25) {
            push(&mut ev, Payload::Move { dx: rng.gen_range(10..=14) * if rng.gen() { 1 } else { -1 }, dy: 0 });
        } else if rng.gen_bool(0.4) {
            push(&mut ev, Payload::Move { dx: rng.gen_range(-3..=3), dy: rng.gen_range(-3..=3) });
        }
        push(&mut ev, Payload::Up);
    }
    Trace::new(ev)
}

#[derive(Debug, Clone)]
pub struct Leaf {
    pub state: usize,
    pub pixels: Pixels,
    pub p: f64,
    /// The click that produced this leaf pressed some button.
    pub hit: bool,
}

fn touches(px: &Pixels, r: &Rect) -> bool {
    px.iter().any(|&(x, y)| r.contains(Point::new(x, y)))
}

/// Every leaf of the outcome tree, expanded click by click without any
/// merging or pruning, with cursor sets kept as explicit pixels.
pub struct Enumeration<'m> {
    model: &'m UiModel,
    cfg: EstimatorConfig,
    pub leaves: Vec<Leaf>,
    at_down: Option<(Vec<Leaf>, i64, Vec<(i32, i32)>)>,
    burst: bool,
}

impl<'m> Enumeration<'m> {
    pub fn new(model: &'m UiModel, cfg: EstimatorConfig, known: bool) -> Self {
        let all: Pixels = (0..model.screen_width).flat_map(|x| (0..model.screen_height).map(move |y| (x, y))).collect();
        let leaves = if known {
            let s = model.state_index(&model.start_state).unwrap();
            vec![Leaf { state: s, pixels: all, p: 1.0, hit: false }]
        } else {
            let n = model.states.len();
            (0..n).map(|s| Leaf { state: s, pixels: all.clone(), p: 1.0 / n as f64, hit: false }).collect()
        };
        Self { model, cfg, leaves, at_down: None, burst: false }
    }

    pub fn state_probs(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.model.states.len()];
        for l in &self.leaves {
            v[l.state] += l.p;
        }
        v
    }

    fn shift(&self, px: &Pixels, dx: i32, dy: i32) -> Pixels {
        let (w, h) = (self.model.screen_width, self.model.screen_height);
        px.iter().map(|&(x, y)| ((x + dx).clamp(0, w - 1), (y + dy).clamp(0, h - 1))).collect()
    }

    fn normalize(leaves: &mut [Leaf]) -> bool {
        let total: f64 = leaves.iter().map(|l| l.p).sum();
        if !(total > 0.0) {
            return false;
        }
        for l in leaves {
            l.p /= total;
        }
        true
    }

    fn evidence(&mut self, consistent: &[bool]) {
        if !self.cfg.element_detection {
            return;
        }
        let s = self.cfg.detection_scale;
        for (l, &c) in self.leaves.iter_mut().zip(consistent) {
            l.p *= if c { s } else { 1.0 - s };
        }
        if !Self::normalize(&mut self.leaves) {
            let n = self.leaves.len() as f64;
            for l in &mut self.leaves {
                l.p = 1.0 / n;
            }
        }
    }

    fn kind_rects(&self, state: usize, kind: ElementKind) -> Vec<Rect> {
        self.model.states[state].elements.iter().filter(|e| e.kind == kind).map(|e| e.rect).collect()
    }

    fn branch(&self, parents: &[Leaf]) -> Vec<Leaf> {
        let mut out = Vec::new();
        for parent in parents {
            let st = &self.model.states[parent.state];
            let mut kids: Vec<(usize, Pixels, f64, bool)> = Vec::new();
            let mut in_any = Pixels::new();
            for e in st.transitions() {
                let px: Pixels = parent.pixels.iter().copied().filter(|&(x, y)| e.rect.contains(Point::new(x, y))).collect();
                in_any.extend(px.iter().copied());
                if !px.is_empty() {
                    let dest = self.model.state_index(e.transition_to.as_deref().unwrap()).unwrap();
                    kids.push((dest, px, e.a_priori_weight, true));
                }
            }
            let n_trans = kids.len();
            let stay: Pixels = parent.pixels.difference(&in_any).copied().collect();
            if !stay.is_empty() {
                let hit = st
                    .elements
                    .iter()
                    .filter(|e| !e.is_transition() && matches!(e.kind, ElementKind::Button | ElementKind::MultipleChoice))
                    .any(|e| touches(&stay, &e.rect));
                kids.push((parent.state, stay, 1.0, hit));
            }
            let k = kids.len() as f64;
            let mut w: Vec<f64> = kids
                .iter()
                .map(|(_, px, _, _)| match self.cfg.transition_scheme {
                    TransitionScheme::EqualTransitions => 1.0 / k,
                    TransitionScheme::ElementArea => px.len() as f64 / parent.pixels.len() as f64,
                })
                .collect();
            if self.cfg.a_priori && n_trans > 0 {
                let mass: f64 = w[..n_trans].iter().sum();
                let weighted: f64 = (0..n_trans).map(|i| w[i] * kids[i].2).sum();
                for i in 0..n_trans {
                    w[i] = if weighted > 0.0 { mass * w[i] * kids[i].2 / weighted } else { 0.0 };
                }
            }
            for ((state, pixels, _, hit), b) in kids.into_iter().zip(w) {
                if parent.p * b > 0.0 {
                    out.push(Leaf { state, pixels, p: parent.p * b, hit });
                }
            }
        }
        out
    }

    pub fn observe(&mut self, e: &InputEvent) {
        if !matches!(e.payload, Payload::Key { .. }) {
            self.burst = false;
        }
        match e.payload {
            Payload::Move { dx, dy } => {
                for i in 0..self.leaves.len() {
                    self.leaves[i].pixels = self.shift(&self.leaves[i].pixels, dx, dy);
                }
                if let Some((_, sum, moves)) = &mut self.at_down {
                    *sum += dx as i64;
                    moves.push((dx, dy));
                }
            }
            Payload::Down => {
                if self.at_down.is_none() {
                    self.at_down = Some((self.leaves.clone(), 0, Vec::new()));
                }
            }
            Payload::Up => {
                let Some((snapshot, sum, moves)) = self.at_down.take() else { return };
                if sum.abs() < self.cfg.drag_threshold as i64 {
                    let mut kids = self.branch(&snapshot);
                    if !Self::normalize(&mut kids) {
                        return;
                    }
                    self.leaves = kids;
                    let hits: Vec<bool> = self.leaves.iter().map(|l| l.hit).collect();
                    self.evidence(&hits);
                    for (dx, dy) in moves {
                        for i in 0..self.leaves.len() {
                            self.leaves[i].pixels = self.shift(&self.leaves[i].pixels, dx, dy);
                        }
                    }
                } else {
                    let c: Vec<bool> = snapshot
                        .iter()
                        .map(|l| self.kind_rects(l.state, ElementKind::Slider).iter().any(|r| touches(&l.pixels, r)))
                        .collect();
                    self.evidence(&c);
                }
            }
            Payload::Key { key } => {
                if key.is_printable() && !self.burst {
                    self.burst = true;
                    let c: Vec<bool> = self
                        .leaves
                        .iter()
                        .map(|l| self.kind_rects(l.state, ElementKind::TextField).iter().any(|r| touches(&l.pixels, r)))
                        .collect();
                    self.evidence(&c);
                }
            }
            _ => panic!("toy traces hold mouse and key events only"),
        }
    }
}
