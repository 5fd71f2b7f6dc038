//! Synthetic users: scripted tasks executed with noisy pointing, detours
//! and occasional wrong clicks.

use std::collections::{HashSet, VecDeque};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use super::{InputEvent, InputMode, KeyCode, Payload, Trace, TraceMeta};
use crate::error::GenerateError;
use crate::geometry::{Point, Rect};
use crate::model::{ElementKind, UiElement, UiModel, Value};
use crate::terminal::{slider_step, slider_thumb_x, TerminalState};

/// Bundled task for the pacemaker model.
pub const PACEMAKER_TASK: &str = include_str!("../../../../models/pacemaker.task");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UserProfile {
    /// Probability that a gesture is preceded by a click on the wrong
    /// element or on the background.
    pub error_rate: f64,
    pub mean_clicks: f64,
    pub sd_clicks: f64,
    pub min_clicks: u32,
    pub inter_click_median_ms: f64,
    /// Log-space sd of the inter-click time.
    pub inter_click_sigma: f64,
    /// Pointing sd as a fraction of the element's width/height.
    pub pointing_noise: f64,
    pub move_cadence_ms: (u64, u64),
    pub key_gap_ms: (u64, u64),
}

impl Default for UserProfile {
    fn default() -> Self {
        Self {
            error_rate: 0.07,
            mean_clicks: 29.0,
            sd_clicks: 22.0,
            min_clicks: 10,
            inter_click_median_ms: 2200.0,
            inter_click_sigma: 0.45,
            pointing_noise: 0.2,
            move_cadence_ms: (20, 60),
            key_gap_ms: (90, 260),
        }
    }
}

impl UserProfile {
    pub fn check(&self) -> Result<(), GenerateError> {
        let bad = |m: &str| Err(GenerateError::Task(format!("profile: {m}")));
        if !(0.0..=1.0).contains(&self.error_rate) {
            return bad("error_rate must be in [0, 1]");
        }
        if self.inter_click_median_ms <= 0.0 || self.inter_click_sigma < 0.0 || self.pointing_noise < 0.0 {
            return bad("timing and noise parameters must be positive");
        }
        if self.move_cadence_ms.0 == 0 || self.move_cadence_ms.0 > self.move_cadence_ms.1 {
            return bad("move_cadence_ms must be a non-empty positive range");
        }
        if self.key_gap_ms.0 > self.key_gap_ms.1 {
            return bad("key_gap_ms must be a range");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum GoalAction {
    Click,
    Type { value: String },
    Slide { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalStep {
    /// State the element is used in; defaults to the nearest state that
    /// has it.
    #[serde(default)]
    pub state: Option<String>,
    pub element: String,
    #[serde(flatten)]
    pub action: GoalAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Task {
    pub name: String,
    /// States never entered on the way to a goal or during detours.
    #[serde(default)]
    pub avoid_states: Vec<String>,
    pub steps: Vec<GoalStep>,
}

impl Task {
    pub fn parse(text: &str) -> Result<Self, GenerateError> {
        toml::from_str(text).map_err(|e| GenerateError::Task(e.to_string()))
    }

    pub fn pacemaker() -> Self {
        Self::parse(PACEMAKER_TASK).expect("bundled task parses")
    }

    /// Values the task leaves in target elements.
    pub fn goal_values(&self) -> Vec<(String, Value)> {
        let mut out: Vec<(String, Value)> = Vec::new();
        for s in &self.steps {
            let v = match &s.action {
                GoalAction::Type { value } => Value::Text(value.clone()),
                GoalAction::Slide { value } => Value::Number(*value),
                GoalAction::Click => continue,
            };
            out.retain(|(e, _)| e != &s.element);
            out.push((s.element.clone(), v));
        }
        out
    }

    pub fn check(&self, model: &UiModel) -> Result<(), GenerateError> {
        for (i, s) in self.steps.iter().enumerate() {
            let unreachable = |msg: String| GenerateError::Unreachable { step: i, msg };
            let el = match &s.state {
                Some(st) => model.element(st, &s.element).map_err(|e| unreachable(e.to_string()))?,
                None => model
                    .find_element(&s.element)
                    .map(|(_, e)| e)
                    .ok_or_else(|| unreachable(format!("no state has element `{}`", s.element)))?,
            };
            let kind_ok = match &s.action {
                GoalAction::Click => true,
                GoalAction::Type { .. } => el.kind == ElementKind::TextField,
                GoalAction::Slide { value } => {
                    el.kind == ElementKind::Slider && el.value_domain.is_some_and(|d| d.contains(*value) && d.on_grid(*value))
                }
            };
            if !kind_ok {
                return Err(unreachable(format!("action does not fit `{}` ({})", el.id, el.kind.as_str())));
            }
        }
        Ok(())
    }
}

struct Gen<'a> {
    model: &'a UiModel,
    profile: &'a UserProfile,
    task: &'a Task,
    rng: ChaCha8Rng,
    sim: TerminalState,
    events: Vec<InputEvent>,
    t: u64,
    last_up: u64,
    clicks: u32,
    avoid: HashSet<&'a str>,
}

impl<'a> Gen<'a> {
    fn emit(&mut self, payload: Payload) {
        let e = InputEvent::new(self.t, payload);
        self.sim.apply(self.model, &e);
        if matches!(payload, Payload::Up) {
            self.clicks += 1;
            self.last_up = self.t;
        }
        self.events.push(e);
    }

    fn uniform(&mut self, (lo, hi): (u64, u64)) -> u64 {
        self.rng.gen_range(lo..=hi)
    }

    fn normal(&mut self, sd: f64) -> f64 {
        if sd <= 0.0 {
            return 0.0;
        }
        Normal::new(0.0, sd).expect("finite sd").sample(&mut self.rng)
    }

    /// Noisy aim point inside `r`.
    fn aim(&mut self, r: &Rect) -> Point {
        let c = r.center();
        let n = self.profile.pointing_noise;
        let x = c.x as f64 + self.normal(n * r.w as f64);
        let y = c.y as f64 + self.normal(n * r.h as f64);
        Point::new(
            (x.round() as i32).clamp(r.x + 1.min(r.w - 1), r.right() - 1 - 1.min(r.w - 1)),
            (y.round() as i32).clamp(r.y + 1.min(r.h - 1), r.bottom() - 1 - 1.min(r.h - 1)),
        )
    }

    /// Straight-line motion with an optional noisy waypoint.
    fn move_to(&mut self, target: Point) {
        let from = self.sim.cursor;
        let (dx, dy) = ((target.x - from.x) as f64, (target.y - from.y) as f64);
        let dist = (dx * dx + dy * dy).sqrt();
        if dist == 0.0 {
            return;
        }
        let mut waypoints = Vec::new();
        if dist > 60.0 && self.rng.gen_bool(0.6) {
            let f = 0.8 + self.rng.gen_range(0.0..0.25);
            let sd = 0.04 * dist;
            let wx = from.x as f64 + f * dx + self.normal(sd);
            let wy = from.y as f64 + f * dy + self.normal(sd);
            waypoints.push(self.model.screen().clamp_point(Point::new(wx.round() as i32, wy.round() as i32)));
        }
        waypoints.push(target);
        let mut cur = from;
        for wp in waypoints {
            let (sx, sy) = ((wp.x - cur.x) as f64, (wp.y - cur.y) as f64);
            let seg = (sx * sx + sy * sy).sqrt();
            let step_len = self.rng.gen_range(12.0..40.0);
            let n = ((seg / step_len).ceil() as i32).max(1);
            let (mut px, mut py) = (cur.x, cur.y);
            for i in 1..=n {
                let nx = cur.x + (sx * i as f64 / n as f64).round() as i32;
                let ny = cur.y + (sy * i as f64 / n as f64).round() as i32;
                if (nx, ny) != (px, py) {
                    self.t += self.uniform(self.profile.move_cadence_ms);
                    self.emit(Payload::Move { dx: nx - px, dy: ny - py });
                }
                (px, py) = (nx, ny);
            }
            cur = wp;
        }
        debug_assert_eq!(self.sim.cursor, target);
    }

    /// Time to start moving so the next button-up lands one sampled
    /// inter-click gap after the previous one.
    fn wait_for_next_gesture(&mut self, target: Point) {
        let gap = LogNormal::new(self.profile.inter_click_median_ms.ln(), self.profile.inter_click_sigma)
            .expect("valid lognormal")
            .sample(&mut self.rng) as u64;
        let c = self.sim.cursor;
        let dist = (((target.x - c.x).pow(2) + (target.y - c.y).pow(2)) as f64).sqrt();
        let avg = (self.profile.move_cadence_ms.0 + self.profile.move_cadence_ms.1) / 2;
        let move_ms = (dist / 26.0).ceil() as u64 * avg + 120;
        let start = (self.last_up + gap).saturating_sub(move_ms);
        self.t = self.t.max(start) + self.uniform((60, 200));
    }

    fn click(&mut self, p: Point) {
        self.wait_for_next_gesture(p);
        self.move_to(p);
        self.t += self.uniform((40, 120));
        self.emit(Payload::Down);
        self.t += self.uniform((60, 150));
        self.emit(Payload::Up);
    }

    fn drag_slider(&mut self, el: &UiElement, value: f64) {
        let d = el.value_domain.expect("slider has a domain");
        let cur = self.sim.value(&el.id).and_then(Value::as_number).unwrap_or(d.min);
        let (k0, k1) = (d.step_of(cur), d.step_of(value));
        if k0 == k1 {
            return;
        }
        let grab_x = slider_thumb_x(el, cur).clamp(el.rect.x, el.rect.right() - 1);
        let grab = Point::new(grab_x, self.aim(&el.rect).y);
        let n = d.steps();
        let span = (el.rect.w - 1) as i64;
        let mut dx = ((k1 - k0) * span + (k1 - k0).signum() * n / 2) / n;
        while slider_step(k0, dx, n, el.rect.w) != k1 {
            dx += (k1 - slider_step(k0, dx, n, el.rect.w)).signum();
        }
        self.wait_for_next_gesture(grab);
        self.move_to(grab);
        self.t += self.uniform((50, 120));
        self.emit(Payload::Down);
        let target = grab.x + dx as i32;
        let mut x = grab.x;
        while x != target {
            let step = self.rng.gen_range(6..18).min((target - x).abs());
            let step = step * (target - x).signum();
            x += step;
            self.t += self.uniform(self.profile.move_cadence_ms);
            self.emit(Payload::Move { dx: step, dy: 0 });
        }
        self.t += self.uniform((80, 200));
        self.emit(Payload::Up);
    }

    fn type_text(&mut self, el: &UiElement, value: &str) {
        let p = self.aim(&el.rect);
        self.click(p);
        let has_text = self.sim.value(&el.id).is_some_and(|v| !v.to_text().is_empty());
        self.t += self.uniform((250, 600));
        if has_text {
            for k in el.default_clear_keys() {
                self.emit(Payload::Key { key: k });
                self.t += self.uniform(self.profile.key_gap_ms);
            }
        }
        for c in value.chars() {
            self.emit(Payload::Key { key: KeyCode::Char(c) });
            self.t += self.uniform(self.profile.key_gap_ms);
        }
    }

    fn state(&self) -> &'a crate::model::UiState {
        self.model.state(&self.sim.state).expect("sim state exists")
    }

    /// Shortest click path to any state satisfying `goal`, preferring
    /// paths that do not press a confirmation element.
    fn path_to(&self, goal: &dyn Fn(&str) -> bool) -> Option<Vec<&'a UiElement>> {
        self.path_with(goal, false).or_else(|| self.path_with(goal, true))
    }

    fn path_with(&self, goal: &dyn Fn(&str) -> bool, confirm: bool) -> Option<Vec<&'a UiElement>> {
        let start = self.sim.state.as_str();
        if goal(start) {
            return Some(Vec::new());
        }
        let mut prev: std::collections::HashMap<&str, (&str, &UiElement)> = Default::default();
        let mut seen: HashSet<&str> = HashSet::from([start]);
        let mut q = VecDeque::from([start]);
        while let Some(s) = q.pop_front() {
            let state = self.model.state(s)?;
            for e in state.transitions() {
                let to = e.transition_to.as_deref().expect("transition");
                let enter_ok = !self.avoid.contains(to) || goal(to);
                if !enter_ok || (e.is_confirmation && !confirm) || !seen.insert(to) {
                    continue;
                }
                prev.insert(to, (s, e));
                if goal(to) {
                    let mut path = Vec::new();
                    let mut cur = to;
                    while cur != start {
                        let (p, e) = prev[cur];
                        path.push(e);
                        cur = p;
                    }
                    path.reverse();
                    return Some(path);
                }
                q.push_back(to);
            }
        }
        None
    }

    /// With probability `error_rate`, click somewhere other than `intended`.
    fn maybe_err(&mut self, intended: &str) {
        if !self.rng.gen_bool(self.profile.error_rate) {
            return;
        }
        let state = self.state();
        let wrong: Vec<&UiElement> = state
            .elements
            .iter()
            .filter(|e| e.id != intended && !e.is_confirmation)
            .filter(|e| e.transition_to.as_deref().map_or(true, |to| !self.avoid.contains(to)))
            .collect();
        let p = if !wrong.is_empty() && self.rng.gen_bool(0.5) {
            let r = wrong.choose(&mut self.rng).expect("non-empty").rect;
            self.aim(&r)
        } else {
            let Some(p) = self.background_point() else { return };
            p
        };
        self.click(p);
    }

    fn background_point(&mut self) -> Option<Point> {
        let state = self.state();
        let screen = self.model.screen();
        (0..64).find_map(|_| {
            let p = Point::new(self.rng.gen_range(0..screen.w), self.rng.gen_range(0..screen.h));
            state.element_at(p).is_none().then_some(p)
        })
    }

    fn navigate(&mut self, step: usize, goal: &dyn Fn(&str) -> bool) -> Result<(), GenerateError> {
        for _ in 0..64 {
            let Some(path) = self.path_to(goal) else {
                return Err(GenerateError::Unreachable {
                    step,
                    msg: format!("no path from `{}`", self.sim.state),
                });
            };
            let Some(next) = path.first() else { return Ok(()) };
            self.maybe_err(&next.id);
            if self.sim.state != self.state_of(next) {
                continue;
            }
            let p = self.aim(&next.rect);
            self.click(p);
        }
        Err(GenerateError::Unreachable { step, msg: "navigation did not converge".into() })
    }

    fn state_of(&self, e: &UiElement) -> String {
        let s = self.state();
        if s.elements.iter().any(|x| std::ptr::eq(x, e)) {
            s.id.clone()
        } else {
            String::new()
        }
    }

    fn detour(&mut self) {
        let state = self.state();
        let options: Vec<&UiElement> = state
            .elements
            .iter()
            .filter(|e| !e.is_confirmation && !e.is_target)
            .filter(|e| match &e.transition_to {
                Some(to) => !self.avoid.contains(to.as_str()),
                None => matches!(e.kind, ElementKind::Slider | ElementKind::MultipleChoice),
            })
            .collect();
        let Some(&el) = options.choose(&mut self.rng) else { return };
        self.maybe_err(&el.id);
        if self.state().element(&el.id).map(|e| e.rect) != Some(el.rect) {
            return;
        }
        match (el.kind, el.value_domain) {
            (ElementKind::Slider, Some(d)) => {
                let v = d.value_at(self.rng.gen_range(0..=d.steps()));
                self.drag_slider(el, v);
            }
            _ => {
                let p = self.aim(&el.rect);
                self.click(p);
            }
        }
    }

    fn run_step(&mut self, i: usize, step: &GoalStep) -> Result<(), GenerateError> {
        let model = self.model;
        let id = step.element.as_str();
        let has = |s: &str| match &step.state {
            Some(want) => s == want,
            None => model.state(s).is_some_and(|st| st.element(id).is_some()),
        };
        for _ in 0..16 {
            self.navigate(i, &has)?;
            self.maybe_err(id);
            if !has(&self.sim.state) {
                continue;
            }
            let el = self.state().element(id).expect("goal element in state");
            match &step.action {
                GoalAction::Click => {
                    let p = self.aim(&el.rect);
                    self.click(p);
                }
                GoalAction::Type { value } => self.type_text(el, value),
                GoalAction::Slide { value } => self.drag_slider(el, *value),
            }
            return Ok(());
        }
        Err(GenerateError::Unreachable { step: i, msg: "kept missing the goal state".into() })
    }
}

/// Number of clicks a trace aims for, drawn from the profile.
fn sample_length(profile: &UserProfile, rng: &mut ChaCha8Rng) -> u32 {
    let dist = Normal::new(profile.mean_clicks, profile.sd_clicks.max(0.0)).expect("finite");
    for _ in 0..1000 {
        let v = dist.sample(rng).round();
        if v >= profile.min_clicks as f64 {
            return v as u32;
        }
    }
    profile.min_clicks
}

/// Generates a trace for `task`; a pure function of its arguments.
pub fn generate(model: &UiModel, profile: &UserProfile, task: &Task, seed: u64) -> Result<Trace, GenerateError> {
    profile.check()?;
    task.check(model)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let length = sample_length(profile, &mut rng);
    let base = task.steps.len() as u32 + 4;
    let extra = length.saturating_sub(base) as usize;
    let mut detours = vec![0usize; task.steps.len() + 1];
    // detours only before the values are confirmed
    let slots = task
        .steps
        .iter()
        .position(|s| model.find_element(&s.element).is_some_and(|(_, e)| e.is_confirmation))
        .unwrap_or(task.steps.len())
        .max(1);
    for _ in 0..extra {
        let slot = rng.gen_range(0..slots);
        detours[slot] += 1;
    }
    let mut g = Gen {
        model,
        profile,
        task,
        rng,
        sim: TerminalState::boot(model),
        events: Vec::new(),
        t: 0,
        last_up: 0,
        clicks: 0,
        avoid: task.avoid_states.iter().map(String::as_str).collect(),
    };
    for (i, step) in task.steps.iter().enumerate() {
        for _ in 0..detours[i] {
            g.detour();
        }
        g.run_step(i, step)?;
    }
    for (id, v) in g.task.goal_values() {
        let ok = g.sim.committed.get(&id).or(g.sim.value(&id)).is_some_and(|have| have.matches(&v));
        if !ok {
            return Err(GenerateError::Task(format!("seed {seed}: `{id}` did not end at {v}")));
        }
    }
    Ok(Trace {
        meta: TraceMeta {
            model: model.name.clone(),
            mode: Some(InputMode::RelativeMouse),
            seed: Some(seed),
            extra: vec![("task".into(), task.name.clone())],
        },
        events: g.events,
    })
}
