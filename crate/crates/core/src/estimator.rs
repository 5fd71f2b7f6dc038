//! Blind state and pointer estimation.
//!
//! The estimator keeps a list of trackers, each a hypothesis (UI state,
//! region of possible cursor positions, probability). Motion translates
//! every region; a click branches every tracker into one child per
//! transition element its region overlaps plus a child that stayed.
//!
//! [`Estimator::observe`] runs the full event pipeline: presses are
//! resolved at button-up, when the press is known to be a click or a drag.
//! A click branches the trackers as they were at button-down and then
//! re-applies the motion made while the button was held.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::EstimatorError;
use crate::geometry::{Delta, Point, Rect, Region};
use crate::model::{ElementKind, UiModel};
use crate::terminal::DEFAULT_DRAG_THRESHOLD;
use crate::trace::{InputEvent, InputMode, Payload};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TransitionScheme {
    /// Every possible outcome of a click is equally likely.
    #[default]
    EqualTransitions,
    /// Outcomes are weighted by the area of the region they keep.
    ElementArea,
}

impl TransitionScheme {
    pub fn as_str(self) -> &'static str {
        match self {
            TransitionScheme::EqualTransitions => "equal",
            TransitionScheme::ElementArea => "area",
        }
    }
}

impl std::str::FromStr for TransitionScheme {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "equal" | "equal_transitions" => Ok(Self::EqualTransitions),
            "area" | "element_area" => Ok(Self::ElementArea),
            _ => Err(format!("unknown transition scheme `{s}` (equal|area)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub transition_scheme: TransitionScheme,
    pub element_detection: bool,
    pub detection_scale: f64,
    /// Weight transitions by the model's `a_priori_weight`s.
    pub a_priori: bool,
    pub target_prob_threshold: f64,
    pub input_mode: InputMode,
    pub prune_epsilon: f64,
    pub max_trackers: usize,
    pub drag_threshold: i32,
    /// Merge all trackers of a state after each click (union of regions,
    /// sum of probabilities). Faster, not exact.
    pub merge_same_state: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            transition_scheme: TransitionScheme::EqualTransitions,
            element_detection: true,
            detection_scale: 0.95,
            a_priori: false,
            target_prob_threshold: 0.9,
            input_mode: InputMode::RelativeMouse,
            prune_epsilon: 1e-12,
            max_trackers: 100_000,
            drag_threshold: DEFAULT_DRAG_THRESHOLD,
            merge_same_state: false,
        }
    }
}

impl EstimatorConfig {
    pub fn check(&self) -> Result<(), EstimatorError> {
        let bad = |m: &str| Err(EstimatorError::Config(m.to_string()));
        if !(self.detection_scale > 0.0 && self.detection_scale <= 1.0) {
            return bad("detection_scale must be in (0, 1]");
        }
        if !(self.target_prob_threshold > 0.0 && self.target_prob_threshold <= 1.0) {
            return bad("target_prob_threshold must be in (0, 1]");
        }
        if !(self.prune_epsilon >= 0.0) {
            return bad("prune_epsilon must be >= 0");
        }
        if self.max_trackers == 0 {
            return bad("max_trackers must be positive");
        }
        if self.drag_threshold < 1 {
            return bad("drag_threshold must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Tracker {
    /// Index into the model's states.
    pub state: usize,
    pub region: Region,
    #[serde(with = "prob_bits")]
    pub prob: OrdF64,
}

/// `f64` wrapper so trackers can derive `Eq`/`Hash` (bitwise).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OrdF64(pub f64);

impl Eq for OrdF64 {}

impl std::hash::Hash for OrdF64 {
    fn hash<H: std::hash::Hasher>(&self, h: &mut H) {
        self.0.to_bits().hash(h)
    }
}

mod prob_bits {
    use super::OrdF64;
    use serde::{Deserialize, Deserializer, Serializer};
    pub fn serialize<S: Serializer>(p: &OrdF64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(p.0)
    }
    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<OrdF64, D::Error> {
        f64::deserialize(d).map(OrdF64)
    }
}

impl Tracker {
    pub fn new(state: usize, region: Region, prob: f64) -> Self {
        Self { state, region, prob: OrdF64(prob) }
    }

    pub fn p(&self) -> f64 {
        self.prob.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceKind {
    SliderDrag,
    TextInput,
    PlainClick,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub kind: EvidenceKind,
    /// Drag displacement or key count.
    pub detail: Option<i64>,
}

impl Evidence {
    pub fn new(kind: EvidenceKind) -> Self {
        Self { kind, detail: None }
    }
}

/// Classifies a window of raw events: a press with horizontal motion of
/// at least `drag_threshold` is a slider drag, a press without is a plain
/// click, any printable key is text input.
pub fn classify(window: &[InputEvent], drag_threshold: i32) -> Option<Evidence> {
    let mut down: Option<(i64, Option<i32>)> = None;
    let mut keys = 0i64;
    let mut found = None;
    for e in window {
        match e.payload {
            Payload::Down => down = Some((0, None)),
            Payload::TouchDown { x, .. } => down = Some((0, Some(x))),
            Payload::Move { dx, .. } => {
                if let Some((sum, _)) = &mut down {
                    *sum += dx as i64;
                }
            }
            Payload::TouchMove { x, .. } => {
                if let Some((sum, Some(x0))) = &mut down {
                    *sum = (x - *x0) as i64;
                }
            }
            Payload::Up | Payload::TouchUp { .. } => {
                if let Some((mut sum, x0)) = down.take() {
                    if let (Payload::TouchUp { x, .. }, Some(x0)) = (e.payload, x0) {
                        sum = (x - x0) as i64;
                    }
                    found = Some(if sum.abs() >= drag_threshold as i64 {
                        Evidence { kind: EvidenceKind::SliderDrag, detail: Some(sum) }
                    } else {
                        Evidence { kind: EvidenceKind::PlainClick, detail: None }
                    });
                }
            }
            Payload::Key { key } if key.is_printable() => keys += 1,
            _ => {}
        }
    }
    if keys > 0 {
        return Some(Evidence { kind: EvidenceKind::TextInput, detail: Some(keys) });
    }
    found
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Estimate {
    /// Probability per state, indexed like the model's states.
    pub state_probs: Vec<f64>,
    pub top_state: usize,
    pub top_prob: f64,
    /// Union of the regions of the top state's trackers.
    pub combined_region: Region,
    pub tracker_count: usize,
}

impl Estimate {
    pub fn top_state_id<'m>(&self, model: &'m UiModel) -> &'m str {
        &model.states[self.top_state].id
    }
}

#[derive(Debug, Clone)]
struct Transition {
    rect: Rect,
    dest: usize,
    weight: f64,
}

#[derive(Debug, Clone, Default)]
struct StateInfo {
    transitions: Vec<Transition>,
    transition_rects: Vec<Rect>,
    /// Buttons (and choices) that do not transition.
    other_buttons: Vec<Rect>,
    sliders: Vec<Rect>,
    text_fields: Vec<Rect>,
}

fn state_info(model: &UiModel) -> Vec<StateInfo> {
    model
        .states
        .iter()
        .map(|s| {
            let mut info = StateInfo::default();
            for e in &s.elements {
                let button_like = matches!(e.kind, ElementKind::Button | ElementKind::MultipleChoice);
                match &e.transition_to {
                    Some(to) => {
                        let dest = model.state_index(to).expect("validated transition target");
                        info.transitions.push(Transition { rect: e.rect, dest, weight: e.a_priori_weight });
                        info.transition_rects.push(e.rect);
                    }
                    None if button_like => info.other_buttons.push(e.rect),
                    None => {}
                }
                match e.kind {
                    ElementKind::Slider => info.sliders.push(e.rect),
                    ElementKind::TextField => info.text_fields.push(e.rect),
                    _ => {}
                }
            }
            info
        })
        .collect()
}

/// What `observe` did with an event.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Observation {
    /// The event completed a press (button-up), click or drag.
    pub press_ended: bool,
    /// The press was a click and the trackers branched.
    pub clicked: bool,
    pub evidence: Option<Evidence>,
}

#[derive(Debug, Clone)]
struct Pending {
    snapshot: Vec<Tracker>,
    raw_dx: i64,
    moves: Vec<Delta>,
    touch_at: Option<Point>,
}

#[derive(Debug, Clone)]
pub struct Estimator {
    model: Arc<UiModel>,
    cfg: EstimatorConfig,
    screen: Rect,
    info: Vec<StateInfo>,
    trackers: Vec<Tracker>,
    /// Per-tracker flag from the last click: the press landed on a button.
    click_hits: Option<Vec<bool>>,
    pending: Option<Pending>,
    in_text_burst: bool,
    events: u64,
    clicks: u64,
}

impl Estimator {
    fn empty(model: Arc<UiModel>, cfg: EstimatorConfig) -> Result<Self, EstimatorError> {
        cfg.check()?;
        Ok(Self {
            screen: model.screen(),
            info: state_info(&model),
            model,
            cfg,
            trackers: Vec::new(),
            click_hits: None,
            pending: None,
            in_text_burst: false,
            events: 0,
            clicks: 0,
        })
    }

    /// One tracker in `state`; the cursor is `cursor` if known, else
    /// anywhere on screen.
    pub fn init_known(
        model: Arc<UiModel>,
        state: &str,
        cursor: Option<Point>,
        cfg: EstimatorConfig,
    ) -> Result<Self, EstimatorError> {
        let idx = model.state_index(state).ok_or_else(|| EstimatorError::UnknownState(state.to_string()))?;
        let mut est = Self::empty(model, cfg)?;
        est.reset_known(idx, cursor);
        Ok(est)
    }

    /// One full-screen tracker per state, equally likely.
    pub fn init_unknown(model: Arc<UiModel>, cfg: EstimatorConfig) -> Result<Self, EstimatorError> {
        let mut est = Self::empty(model, cfg)?;
        let n = est.model.states.len();
        let full = Region::from_rect(est.screen);
        est.trackers = (0..n).map(|s| Tracker::new(s, full.clone(), 1.0 / n as f64)).collect();
        Ok(est)
    }

    fn reset_known(&mut self, state: usize, cursor: Option<Point>) {
        let region = match cursor {
            Some(p) => Region::point(self.screen.clamp_point(p)),
            None => Region::from_rect(self.screen),
        };
        self.trackers = vec![Tracker::new(state, region, 1.0)];
        self.click_hits = None;
        self.pending = None;
        self.in_text_burst = false;
    }

    pub fn model(&self) -> &Arc<UiModel> {
        &self.model
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.cfg
    }

    pub fn trackers(&self) -> &[Tracker] {
        &self.trackers
    }

    pub fn events_seen(&self) -> u64 {
        self.events
    }

    pub fn clicks_seen(&self) -> u64 {
        self.clicks
    }

    /// A press is in progress (button-down seen, button-up not yet).
    pub fn pressed(&self) -> bool {
        self.pending.is_some()
    }

    /// Regions as they were at the current press's button-down.
    pub fn press_trackers(&self) -> Option<&[Tracker]> {
        self.pending.as_ref().map(|p| p.snapshot.as_slice())
    }

    pub fn on_move(&mut self, d: Delta) -> Result<(), EstimatorError> {
        if self.cfg.input_mode == InputMode::AbsoluteTouch {
            return Err(EstimatorError::MoveInTouchMode);
        }
        self.apply_move(d);
        Ok(())
    }

    fn apply_move(&mut self, d: Delta) {
        if d.is_zero() {
            return;
        }
        let screen = self.screen;
        for t in &mut self.trackers {
            t.region = t.region.translate_clip(d, &screen);
        }
    }

    /// Merges trackers with identical state and region. Exact: the future
    /// of a tracker depends only on its state and region.
    pub fn dedupe(&mut self) {
        if self.trackers.len() < 2 {
            return;
        }
        let mut index: HashMap<(usize, Region), usize> = HashMap::with_capacity(self.trackers.len());
        let mut out: Vec<Tracker> = Vec::with_capacity(self.trackers.len());
        for t in self.trackers.drain(..) {
            match index.get(&(t.state, t.region.clone())) {
                Some(&i) => out[i].prob.0 += t.prob.0,
                None => {
                    index.insert((t.state, t.region.clone()), out.len());
                    out.push(t);
                }
            }
        }
        self.trackers = out;
        self.click_hits = None;
    }

    /// Merges all trackers of each state into one.
    pub fn merge_states(&mut self) {
        let mut by_state: Vec<Option<Tracker>> = vec![None; self.model.states.len()];
        for t in self.trackers.drain(..) {
            match &mut by_state[t.state] {
                Some(m) => {
                    m.region = m.region.union(&t.region);
                    m.prob.0 += t.prob.0;
                }
                slot @ None => *slot = Some(t),
            }
        }
        self.trackers = by_state.into_iter().flatten().collect();
        self.click_hits = None;
    }

    /// Branches every tracker on a click. In touch mode `at` is the touch
    /// point and replaces every region first.
    pub fn on_click(&mut self, at: Option<Point>) -> Result<(), EstimatorError> {
        match (self.cfg.input_mode, at) {
            (InputMode::AbsoluteTouch, None) => return Err(EstimatorError::MissingTouchPoint),
            (InputMode::RelativeMouse, Some(_)) => return Err(EstimatorError::WrongInputMode("touch click")),
            _ => {}
        }
        if let Some(p) = at {
            let r = Region::point(self.screen.clamp_point(p));
            for t in &mut self.trackers {
                t.region = r.clone();
            }
        }
        self.dedupe();
        let (children, hits) = self.branch()?;
        let before = std::mem::replace(&mut self.trackers, children);
        if !self.normalize() {
            // every outcome had zero weight: keep the previous hypotheses
            self.trackers = before;
            self.click_hits = None;
            return Ok(());
        }
        self.click_hits = Some(hits);
        if self.cfg.merge_same_state {
            self.merge_states();
        }
        self.prune();
        Ok(())
    }

    fn branch(&self) -> Result<(Vec<Tracker>, Vec<bool>), EstimatorError> {
        let mut out = Vec::with_capacity(self.trackers.len() * 2);
        let mut hits = Vec::with_capacity(self.trackers.len() * 2);
        let mut outcomes: Vec<(usize, Region, f64, bool)> = Vec::new();
        for parent in &self.trackers {
            let info = &self.info[parent.state];
            outcomes.clear();
            let parent_area = parent.region.area() as f64;
            for tr in &info.transitions {
                let r = parent.region.intersect(&tr.rect);
                if !r.is_empty() {
                    outcomes.push((tr.dest, r, tr.weight, true));
                }
            }
            let n_trans = outcomes.len();
            let stay = if n_trans == 0 { parent.region.clone() } else { parent.region.subtract(&info.transition_rects) };
            if !stay.is_empty() {
                let hit = info.other_buttons.iter().any(|b| stay.intersects_rect(b));
                outcomes.push((parent.state, stay, 1.0, hit));
            }
            let k = outcomes.len() as f64;
            let mut base: Vec<f64> = outcomes
                .iter()
                .map(|(_, r, _, _)| match self.cfg.transition_scheme {
                    TransitionScheme::EqualTransitions => 1.0 / k,
                    TransitionScheme::ElementArea => r.area() as f64 / parent_area,
                })
                .collect();
            if self.cfg.a_priori && n_trans > 0 {
                let mass: f64 = base[..n_trans].iter().sum();
                let weighted: f64 = (0..n_trans).map(|i| base[i] * outcomes[i].2).sum();
                for i in 0..n_trans {
                    base[i] = if weighted > 0.0 { mass * base[i] * outcomes[i].2 / weighted } else { 0.0 };
                }
            }
            for ((state, region, _, hit), b) in outcomes.drain(..).zip(base) {
                let p = parent.p() * b;
                if p > 0.0 {
                    out.push(Tracker::new(state, region, p));
                    hits.push(hit);
                }
            }
            if out.len() > self.cfg.max_trackers {
                return Err(EstimatorError::TooManyTrackers { count: out.len(), limit: self.cfg.max_trackers });
            }
        }
        Ok((out, hits))
    }

    /// Rescales to total 1; false if the total is zero.
    fn normalize(&mut self) -> bool {
        let total: f64 = self.trackers.iter().map(Tracker::p).sum();
        if !(total > 0.0) {
            return false;
        }
        for t in &mut self.trackers {
            t.prob.0 /= total;
        }
        true
    }

    fn prune(&mut self) {
        let eps = self.cfg.prune_epsilon;
        if eps <= 0.0 || self.trackers.iter().all(|t| t.p() >= eps) {
            return;
        }
        let keep: Vec<bool> = self.trackers.iter().map(|t| t.p() >= eps).collect();
        if !keep.iter().any(|&k| k) {
            return;
        }
        let mut i = 0;
        self.trackers.retain(|_| {
            i += 1;
            keep[i - 1]
        });
        if let Some(h) = &mut self.click_hits {
            let mut i = 0;
            h.retain(|_| {
                i += 1;
                keep[i - 1]
            });
        }
        self.normalize();
    }

    /// Whether each tracker is consistent with `ev`. Plain clicks use the
    /// hit flags of the last click when fresh.
    fn consistency(&self, kind: EvidenceKind, trackers: &[Tracker]) -> Vec<bool> {
        if kind == EvidenceKind::PlainClick {
            if let Some(h) = &self.click_hits {
                if h.len() == trackers.len() {
                    return h.clone();
                }
            }
        }
        trackers
            .iter()
            .map(|t| {
                let info = &self.info[t.state];
                let hit = |rs: &[Rect]| rs.iter().any(|r| t.region.intersects_rect(r));
                match kind {
                    EvidenceKind::SliderDrag => hit(&info.sliders),
                    EvidenceKind::TextInput => hit(&info.text_fields),
                    EvidenceKind::PlainClick => hit(&info.transition_rects) || hit(&info.other_buttons),
                }
            })
            .collect()
    }

    fn scale(&mut self, consistent: &[bool]) {
        let s = self.cfg.detection_scale;
        for (t, &c) in self.trackers.iter_mut().zip(consistent) {
            t.prob.0 *= if c { s } else { 1.0 - s };
        }
        if !self.normalize() {
            // all mass was inconsistent with s = 1: evidence carries no
            // information about the remaining hypotheses
            let n = self.trackers.len() as f64;
            for t in &mut self.trackers {
                t.prob.0 = 1.0 / n;
            }
        }
        self.prune();
    }

    /// Scales trackers consistent with `ev` by `s` and the others by
    /// `1 - s`, then renormalizes. No-op when detection is off.
    pub fn on_evidence(&mut self, ev: Evidence) {
        if !self.cfg.element_detection {
            return;
        }
        let c = self.consistency(ev.kind, &self.trackers);
        self.scale(&c);
    }

    pub fn estimate(&self) -> Estimate {
        let mut probs = vec![0.0; self.model.states.len()];
        for t in &self.trackers {
            probs[t.state] += t.p();
        }
        let (top, top_prob) = probs
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bp), (i, &p)| if p > bp { (i, p) } else { (bi, bp) });
        Estimate {
            combined_region: self.combined_region(top),
            state_probs: probs,
            top_state: top,
            top_prob,
            tracker_count: self.trackers.len(),
        }
    }

    pub fn state_prob(&self, state: usize) -> f64 {
        self.trackers.iter().filter(|t| t.state == state).map(Tracker::p).sum::<f64>() + 0.0 // an empty f64 sum is -0.0
    }

    pub fn combined_region(&self, state: usize) -> Region {
        let mut rects = Vec::new();
        for t in self.trackers.iter().filter(|t| t.state == state) {
            rects.extend(t.region.rect_iter());
        }
        Region::from_rects(rects)
    }

    /// Smallest window an uncertainty region must fit in before launching
    /// in `state`: the minimum width and minimum height over the state's
    /// target and confirmation elements.
    pub fn launch_window(&self, state: usize) -> Option<Rect> {
        let els = self.model.states[state].elements.iter().filter(|e| e.is_target || e.is_confirmation);
        let (w, h) = els.fold((i32::MAX, i32::MAX), |(w, h), e| (w.min(e.rect.w), h.min(e.rect.h)));
        (w != i32::MAX).then(|| Rect::new(0, 0, w, h))
    }

    /// Target state identified with enough probability and a small enough
    /// uncertainty region.
    pub fn attack_ready(&self, target_state: &str) -> bool {
        let Some(s) = self.model.state_index(target_state) else { return false };
        if self.state_prob(s) < self.cfg.target_prob_threshold {
            return false;
        }
        let Some(window) = self.launch_window(s) else { return false };
        self.combined_region(s).fits_within(&window)
    }

    /// Keeps only the most likely tracker (ties: lowest state index, then
    /// smallest area, then region text).
    pub fn collapse(&mut self) {
        let best = self.trackers.iter().cloned().min_by(|a, b| {
            b.p()
                .partial_cmp(&a.p())
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.state.cmp(&b.state))
                .then(a.region.area().cmp(&b.region.area()))
                .then_with(|| a.region.to_compact().cmp(&b.region.to_compact()))
        });
        if let Some(mut t) = best {
            t.prob = OrdF64(1.0);
            self.trackers = vec![t];
        }
        self.click_hits = None;
        if let Some(p) = &mut self.pending {
            p.snapshot = self.trackers.clone();
            p.moves.clear();
        }
    }

    /// Processes one raw event.
    pub fn observe(&mut self, e: &InputEvent) -> Result<Observation, EstimatorError> {
        self.events += 1;
        let touch = self.cfg.input_mode == InputMode::AbsoluteTouch;
        if let Some(m) = e.payload.mode() {
            if (m == InputMode::AbsoluteTouch) != touch {
                return Err(match e.payload {
                    Payload::Move { .. } => EstimatorError::MoveInTouchMode,
                    _ => EstimatorError::WrongInputMode(e.payload.kind()),
                });
            }
        }
        if !matches!(e.payload, Payload::Key { .. }) {
            self.in_text_burst = false;
        }
        let mut obs = Observation::default();
        match e.payload {
            Payload::Move { dx, dy } => {
                let d = Delta::new(dx, dy);
                self.apply_move(d);
                if let Some(p) = &mut self.pending {
                    p.raw_dx += dx as i64;
                    p.moves.push(d);
                }
            }
            Payload::Down => {
                if self.pending.is_none() {
                    self.pending =
                        Some(Pending { snapshot: self.trackers.clone(), raw_dx: 0, moves: Vec::new(), touch_at: None });
                }
            }
            Payload::TouchDown { x, y } => {
                self.set_point(Point::new(x, y));
                if self.pending.is_none() {
                    self.pending = Some(Pending {
                        snapshot: self.trackers.clone(),
                        raw_dx: 0,
                        moves: Vec::new(),
                        touch_at: Some(Point::new(x, y)),
                    });
                }
            }
            Payload::TouchMove { x, y } => self.set_point(Point::new(x, y)),
            Payload::Up | Payload::TouchUp { .. } => {
                self.clicks += 1;
                obs.press_ended = true;
                let up_point = e.payload.touch_point();
                if let Some(p) = self.pending.take() {
                    let raw_dx = match (up_point, p.touch_at) {
                        (Some(u), Some(d)) => (u.x - d.x) as i64,
                        _ => p.raw_dx,
                    };
                    if raw_dx.abs() < self.cfg.drag_threshold as i64 {
                        self.resolve_click(p, &mut obs)?;
                    } else {
                        self.resolve_drag(p, raw_dx, &mut obs);
                    }
                }
                if let Some(u) = up_point {
                    self.set_point(u);
                }
            }
            Payload::Key { key } => {
                if key.is_printable() && !self.in_text_burst {
                    self.in_text_burst = true;
                    let ev = Evidence { kind: EvidenceKind::TextInput, detail: Some(1) };
                    if self.cfg.element_detection {
                        self.on_evidence(ev);
                        obs.evidence = Some(ev);
                    }
                }
            }
            Payload::Boot => {
                let start = self.model.state_index(&self.model.start_state).expect("validated start state");
                let cursor = self.model.initial_cursor.or(Some(Point::new(0, 0)));
                self.reset_known(start, cursor);
            }
        }
        Ok(obs)
    }

    fn set_point(&mut self, p: Point) {
        let r = Region::point(self.screen.clamp_point(p));
        for t in &mut self.trackers {
            t.region = r.clone();
        }
    }

    fn resolve_click(&mut self, p: Pending, obs: &mut Observation) -> Result<(), EstimatorError> {
        let current = std::mem::replace(&mut self.trackers, p.snapshot);
        let at = p.touch_at;
        if let Err(err) = self.on_click(at) {
            self.trackers = current;
            self.click_hits = None;
            return Err(err);
        }
        obs.clicked = true;
        if self.cfg.element_detection {
            let ev = Evidence::new(EvidenceKind::PlainClick);
            self.on_evidence(ev);
            obs.evidence = Some(ev);
        }
        self.click_hits = None;
        for d in p.moves {
            self.apply_move(d);
        }
        Ok(())
    }

    fn resolve_drag(&mut self, p: Pending, raw_dx: i64, obs: &mut Observation) {
        if !self.cfg.element_detection {
            return;
        }
        let ev = Evidence { kind: EvidenceKind::SliderDrag, detail: Some(raw_dx) };
        // trackers have only moved since button-down, so indices line up
        // with the snapshot unless something pruned them in between
        let basis = if p.snapshot.len() == self.trackers.len() { &p.snapshot } else { &self.trackers };
        let c = self.consistency(EvidenceKind::SliderDrag, basis);
        self.scale(&c);
        obs.evidence = Some(ev);
    }

    pub fn snapshot(&self) -> EstimatorSnapshot {
        EstimatorSnapshot {
            config: self.cfg.clone(),
            events: self.events,
            clicks: self.clicks,
            trackers: self
                .trackers
                .iter()
                .map(|t| SnapshotTracker {
                    state: self.model.states[t.state].id.clone(),
                    region: t.region.rects(),
                    prob: t.p(),
                })
                .collect(),
        }
    }

    /// Rebuilds an estimator from a snapshot (no press in progress).
    pub fn from_snapshot(model: Arc<UiModel>, snap: &EstimatorSnapshot) -> Result<Self, EstimatorError> {
        let mut est = Self::empty(model, snap.config.clone())?;
        est.events = snap.events;
        est.clicks = snap.clicks;
        for t in &snap.trackers {
            let s = est.model.state_index(&t.state).ok_or_else(|| EstimatorError::UnknownState(t.state.clone()))?;
            est.trackers.push(Tracker::new(s, Region::from_rects(t.region.iter().copied()), t.prob));
        }
        Ok(est)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotTracker {
    pub state: String,
    pub region: Vec<Rect>,
    pub prob: f64,
}

/// Serializable estimator state, for per-click dumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSnapshot {
    pub config: EstimatorConfig,
    pub events: u64,
    pub clicks: u64,
    pub trackers: Vec<SnapshotTracker>,
}
