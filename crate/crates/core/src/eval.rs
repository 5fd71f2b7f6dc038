//! Evaluation harness: per-click tracking metrics against the oracle,
//! soundness checks, a-priori weight profiling and latency measurement.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::EstimatorError;
use crate::estimator::{Estimator, EstimatorConfig, TransitionScheme};
use crate::model::UiModel;
use crate::terminal::TerminalState;
use crate::trace::{to_touchscreen, InputMode, Payload, Trace};

/// Fraction of a trace an observer joining late misses.
pub const UNKNOWN_START_CUT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartMode {
    Known,
    Unknown,
}

impl StartMode {
    pub fn as_str(self) -> &'static str {
        match self {
            StartMode::Known => "known",
            StartMode::Unknown => "unknown",
        }
    }
}

impl std::str::FromStr for StartMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "known" => Ok(StartMode::Known),
            "unknown" => Ok(StartMode::Unknown),
            _ => Err(format!("unknown start mode `{s}` (known|unknown)")),
        }
    }
}

/// Trace prepared for tracking: the events the estimator sees and the
/// oracle state at the moment it starts.
pub struct Prepared {
    pub trace: Trace,
    pub boot: TerminalState,
}

/// Applies touchscreen conversion and the unknown-start cut.
pub fn prepare(model: &UiModel, trace: &Trace, start: StartMode, touchscreen: bool) -> Prepared {
    let trace = if touchscreen && trace.mode() == InputMode::RelativeMouse {
        to_touchscreen(model, trace, None)
    } else {
        trace.clone()
    };
    let mut boot = TerminalState::boot(model);
    let cut = match start {
        StartMode::Known => 0,
        StartMode::Unknown => trace.quiet_cut(UNKNOWN_START_CUT),
    };
    for e in &trace.events[..cut] {
        boot.apply(model, e);
    }
    let mut rest = trace.clone();
    rest.events.drain(..cut);
    Prepared { trace: rest, boot }
}

pub fn new_estimator(model: &Arc<UiModel>, start: StartMode, cfg: EstimatorConfig) -> Result<Estimator, EstimatorError> {
    match start {
        StartMode::Known => Estimator::init_known(model.clone(), &model.start_state, None, cfg),
        StartMode::Unknown => Estimator::init_unknown(model.clone(), cfg),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClickRow {
    pub trace: String,
    pub config: String,
    pub click: u32,
    /// Combined uncertainty area of the top state, percent of the screen.
    pub area_pct: f64,
    pub correct: bool,
    pub top_state: String,
    pub true_state: String,
    pub top_prob: f64,
    pub true_state_prob: f64,
    pub trackers: usize,
}

/// Short label for an estimator configuration.
pub fn config_label(cfg: &EstimatorConfig) -> String {
    let mut s = cfg.transition_scheme.as_str().to_string();
    if cfg.element_detection {
        s.push_str("+detect");
    }
    if cfg.a_priori {
        s.push_str("+apriori");
    }
    if cfg.input_mode == InputMode::AbsoluteTouch {
        s.push_str("+touch");
    }
    s
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrackResult {
    pub rows: Vec<ClickRow>,
    /// Clicks where the tracker limit forced a collapse.
    pub collapses: u32,
}

/// Runs the estimator over a prepared trace and scores it after every
/// button-up against the oracle.
pub fn track(
    model: &Arc<UiModel>,
    name: &str,
    prepared: &Prepared,
    start: StartMode,
    mut cfg: EstimatorConfig,
) -> Result<TrackResult, EstimatorError> {
    cfg.input_mode = prepared.trace.mode();
    let label = config_label(&cfg);
    let mut est = new_estimator(model, start, cfg)?;
    let mut truth = prepared.boot.clone();
    let screen_area = model.screen_area() as f64;
    let mut out = TrackResult::default();
    for e in &prepared.trace.events {
        truth.apply(model, e);
        let obs = match est.observe(e) {
            Ok(o) => o,
            Err(EstimatorError::TooManyTrackers { .. }) => {
                out.collapses += 1;
                est.collapse();
                continue;
            }
            Err(err) => return Err(err),
        };
        if !obs.press_ended {
            continue;
        }
        let estimate = est.estimate();
        let true_idx = model.state_index(&truth.state).expect("oracle state in model");
        out.rows.push(ClickRow {
            trace: name.to_string(),
            config: label.clone(),
            click: out.rows.len() as u32 + 1,
            area_pct: 100.0 * estimate.combined_region.area() as f64 / screen_area,
            correct: estimate.top_state == true_idx,
            top_state: model.states[estimate.top_state].id.clone(),
            true_state: truth.state.clone(),
            top_prob: estimate.top_prob,
            true_state_prob: estimate.state_probs[true_idx],
            trackers: estimate.tracker_count,
        });
    }
    Ok(out)
}

/// First event at which no tracker matches the oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct SoundnessViolation {
    pub index: usize,
    pub true_state: String,
    pub cursor: crate::geometry::Point,
}

/// Checks that some tracker with positive probability holds the oracle's
/// state and cursor after every event.
pub fn check_soundness(
    model: &Arc<UiModel>,
    prepared: &Prepared,
    start: StartMode,
    mut cfg: EstimatorConfig,
) -> Result<Option<SoundnessViolation>, EstimatorError> {
    cfg.input_mode = prepared.trace.mode();
    let mut est = new_estimator(model, start, cfg)?;
    let mut truth = prepared.boot.clone();
    for (index, e) in prepared.trace.events.iter().enumerate() {
        truth.apply(model, e);
        est.observe(e)?;
        let s = model.state_index(&truth.state).expect("oracle state in model");
        let ok = est.trackers().iter().any(|t| t.state == s && t.p() > 0.0 && t.region.contains(truth.cursor));
        if !ok {
            return Ok(Some(SoundnessViolation { index, true_state: truth.state.clone(), cursor: truth.cursor }));
        }
    }
    Ok(None)
}

/// Per-state, per-element click counts turned into Laplace-smoothed
/// weights (count + 1).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WeightTable {
    pub weights: BTreeMap<String, BTreeMap<String, f64>>,
}

impl WeightTable {
    pub fn apply_to(&self, model: &mut UiModel) {
        for s in &mut model.states {
            let Some(ws) = self.weights.get(&s.id) else { continue };
            for e in &mut s.elements {
                if let Some(w) = ws.get(&e.id) {
                    e.a_priori_weight = *w;
                }
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("weight table serializes")
    }

    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }
}

/// Counts, by oracle replay, which element every click activated.
pub fn profile_weights(model: &UiModel, traces: &[Trace]) -> WeightTable {
    let mut counts: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for s in &model.states {
        let row = counts.entry(s.id.clone()).or_default();
        for e in &s.elements {
            row.insert(e.id.clone(), 1.0);
        }
    }
    for tr in traces {
        let mut t = TerminalState::boot(model);
        for e in &tr.events {
            let state = t.state.clone();
            let fx = t.apply(model, e);
            if let Some(id) = fx.activated {
                *counts.get_mut(&state).and_then(|r| r.get_mut(&id)).expect("element of state") += 1.0;
            }
        }
    }
    WeightTable { weights: counts }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyRow {
    pub trace: String,
    pub start: String,
    pub click: u32,
    pub micros: f64,
    pub trackers: usize,
}

/// Wall time spent in `observe` for each button-up event.
pub fn bench_trace(
    model: &Arc<UiModel>,
    name: &str,
    prepared: &Prepared,
    start: StartMode,
    mut cfg: EstimatorConfig,
) -> Result<Vec<LatencyRow>, EstimatorError> {
    cfg.input_mode = prepared.trace.mode();
    let mut est = new_estimator(model, start, cfg)?;
    let mut rows = Vec::new();
    for e in &prepared.trace.events {
        let is_up = matches!(e.payload, Payload::Up | Payload::TouchUp { .. });
        let t0 = Instant::now();
        match est.observe(e) {
            Ok(_) => {}
            Err(EstimatorError::TooManyTrackers { .. }) => est.collapse(),
            Err(err) => return Err(err),
        }
        let dt = t0.elapsed();
        if is_up {
            rows.push(LatencyRow {
                trace: name.to_string(),
                start: start.as_str().to_string(),
                click: rows.len() as u32 + 1,
                micros: dt.as_secs_f64() * 1e6,
                trackers: est.trackers().len(),
            });
        }
    }
    Ok(rows)
}

/// Fraction of traces whose estimate is correct at `click` (traces shorter
/// than that are scored at their last click).
pub fn correct_rate_at(results: &[Vec<ClickRow>], click: u32) -> f64 {
    let scored: Vec<bool> = results
        .iter()
        .filter_map(|rows| rows.iter().take_while(|r| r.click <= click).last().map(|r| r.correct))
        .collect();
    if scored.is_empty() {
        return 0.0;
    }
    scored.iter().filter(|&&c| c).count() as f64 / scored.len() as f64
}

/// Fraction of traces whose uncertainty area is at most `pct` percent of
/// the screen at `click`.
pub fn small_area_rate_at(results: &[Vec<ClickRow>], click: u32, pct: f64) -> f64 {
    let scored: Vec<bool> = results
        .iter()
        .filter_map(|rows| rows.iter().take_while(|r| r.click <= click).last().map(|r| r.area_pct <= pct))
        .collect();
    if scored.is_empty() {
        return 0.0;
    }
    scored.iter().filter(|&&c| c).count() as f64 / scored.len() as f64
}

/// The three cumulative option columns for a scheme: base, with element
/// detection, with detection and a-priori weights.
pub fn option_columns(scheme: TransitionScheme) -> [EstimatorConfig; 3] {
    let base = EstimatorConfig { transition_scheme: scheme, element_detection: false, ..Default::default() };
    let detect = EstimatorConfig { element_detection: true, ..base.clone() };
    let apriori = EstimatorConfig { a_priori: true, ..detect.clone() };
    [base, detect, apriori]
}
