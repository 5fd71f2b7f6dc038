//! Acceptance criteria for the tracker and interposer. Runs every
//! criterion, prints one PASS/FAIL line each, and exits non-zero if any
//! failed. Tolerances are the constants below.

mod common;

use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use blindtrack::attack::{default_malicious_value, run_attack, target_elements, AttackRun, AttackSpec, Variant};
use blindtrack::estimator::{Estimator, EstimatorConfig, TransitionScheme};
use blindtrack::eval::{
    bench_trace, check_soundness, correct_rate_at, option_columns, prepare, profile_weights, small_area_rate_at, track,
    ClickRow, StartMode,
};
use blindtrack::geometry::{Delta, Point, Rect, Region};
use blindtrack::model::UiModel;
use blindtrack::service::{decode_server, encode_client, log_from_frames, ClientMsg, Registry, ServiceSession};
use blindtrack::trace::{generate, Task, Trace, UserProfile};

const GEOMETRY_CASES: usize = 1000;
const GEOMETRY_MAX_SCREEN: i32 = 32;
const GEOMETRY_TIME_LIMIT: Duration = Duration::from_secs(60);

const SOUNDNESS_TRACES: usize = 200;

const EXACT_MODELS: usize = 50;
const EXACT_MAX_CLICKS: usize = 6;
const EXACT_TOL: f64 = 1e-9;

const CORPUS_TRACES: usize = 200;
const CORPUS_SEED: u64 = 1000;
const TRAIN_SEED: u64 = 2000;
const ACCURACY_CLICK: u32 = 10;
const KNOWN_MIN_CORRECT: f64 = 0.90;
const UNKNOWN_MIN_CORRECT: f64 = 0.80;
const AREA_MAX_PCT: f64 = 1.0;
const AREA_CLICK_KNOWN: u32 = 5;
const AREA_CLICK_UNKNOWN: u32 = 10;
const AREA_MIN_FRACTION: f64 = 0.90;

const DETECTION_MIN_GAIN: f64 = 0.20;
const APRIORI_MAX_CHANGE: f64 = 0.05;

const TOUCH_CLICK: u32 = 5;
const TOUCH_MIN_CORRECT: f64 = 0.99;

const PERF_CLICK: u32 = 10;
const PERF_KNOWN_MEDIAN: Duration = Duration::from_millis(10);
const PERF_UNKNOWN_MEDIAN: Duration = Duration::from_millis(50);

const ATTACK_TRACES: usize = 100;
const ATTACK_SEED: u64 = 5000;
const ATTACK_SPEEDS_MS: [u64; 3] = [10, 125, 250];

struct Verdict {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn verdict(name: &'static str, pass: bool, detail: String) -> Verdict {
    Verdict { name, pass, detail }
}

fn corpus(model: &UiModel, seed: u64, n: usize) -> Vec<(String, Trace)> {
    let profile = UserProfile::default();
    let task = Task::pacemaker();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let s = seed + i as u64;
            (format!("trace-{s}"), generate(model, &profile, &task, s).expect("generator completes the task"))
        })
        .collect()
}

// ---------------------------------------------------------------- geometry

struct Bitmap {
    w: i32,
    h: i32,
    bits: Vec<bool>,
}

impl Bitmap {
    fn new(w: i32, h: i32) -> Self {
        Self { w, h, bits: vec![false; (w * h) as usize] }
    }

    fn from_rects(w: i32, h: i32, rects: &[Rect]) -> Self {
        let mut b = Self::new(w, h);
        for r in rects {
            for y in r.y.max(0)..r.bottom().min(h) {
                for x in r.x.max(0)..r.right().min(w) {
                    b.bits[(y * w + x) as usize] = true;
                }
            }
        }
        b
    }

    fn get(&self, x: i32, y: i32) -> bool {
        self.bits[(y * self.w + x) as usize]
    }

    fn zip(&self, o: &Bitmap, f: impl Fn(bool, bool) -> bool) -> Bitmap {
        Bitmap { w: self.w, h: self.h, bits: self.bits.iter().zip(&o.bits).map(|(&a, &b)| f(a, b)).collect() }
    }

    fn shift_clamp(&self, d: Delta) -> Bitmap {
        let mut out = Bitmap::new(self.w, self.h);
        for y in 0..self.h {
            for x in 0..self.w {
                if self.get(x, y) {
                    let (nx, ny) = ((x + d.dx).clamp(0, self.w - 1), (y + d.dy).clamp(0, self.h - 1));
                    out.bits[(ny * self.w + nx) as usize] = true;
                }
            }
        }
        out
    }

    fn count(&self) -> u64 {
        self.bits.iter().filter(|&&b| b).count() as u64
    }

    fn matches(&self, r: &Region) -> bool {
        if r.area() != self.count() {
            return false;
        }
        // members outside the screen would not show up in the scan below
        if r.rect_iter().any(|q| q.x < 0 || q.y < 0 || q.right() > self.w || q.bottom() > self.h) {
            return false;
        }
        (0..self.h).all(|y| (0..self.w).all(|x| r.contains(Point::new(x, y)) == self.get(x, y)))
    }
}

fn random_rect(rng: &mut ChaCha8Rng, w: i32, h: i32) -> Rect {
    let x = rng.gen_range(0..w);
    let y = rng.gen_range(0..h);
    Rect::new(x, y, rng.gen_range(0..=w - x), rng.gen_range(0..=h - y))
}

fn geometry() -> Verdict {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut failures = Vec::new();
    let mut checks = 0usize;
    for case in 0..GEOMETRY_CASES {
        let w = rng.gen_range(1..=GEOMETRY_MAX_SCREEN);
        let h = rng.gen_range(1..=GEOMETRY_MAX_SCREEN);
        let ra: Vec<Rect> = (0..rng.gen_range(0..6)).map(|_| random_rect(&mut rng, w, h)).collect();
        let rb: Vec<Rect> = (0..rng.gen_range(0..6)).map(|_| random_rect(&mut rng, w, h)).collect();
        let clip = random_rect(&mut rng, w, h);
        let d = Delta::new(rng.gen_range(-40..=40), rng.gen_range(-40..=40));
        let screen = Rect::new(0, 0, w, h);
        let (a, b) = (Region::from_rects(ra.iter().copied()), Region::from_rects(rb.iter().copied()));
        let (ma, mb) = (Bitmap::from_rects(w, h, &ra), Bitmap::from_rects(w, h, &rb));
        let mc = Bitmap::from_rects(w, h, &[clip]);
        let results = [
            ("from_rects", a.clone(), ma.zip(&ma, |x, _| x)),
            ("translate_clip", a.translate_clip(d, &screen), ma.shift_clamp(d)),
            ("intersect", a.intersect(&clip), ma.zip(&mc, |x, y| x && y)),
            ("intersect_region", a.intersect_region(&b), ma.zip(&mb, |x, y| x && y)),
            ("subtract", a.subtract(&rb), ma.zip(&mb, |x, y| x && !y)),
            ("subtract_region", a.subtract_region(&b), ma.zip(&mb, |x, y| x && !y)),
            ("union", a.union(&b), ma.zip(&mb, |x, y| x || y)),
        ];
        for (op, got, want) in &results {
            checks += 1;
            if !want.matches(got) {
                failures.push(format!("case {case} {op}"));
            }
        }
    }
    let took = t0.elapsed();
    let pass = failures.is_empty() && took < GEOMETRY_TIME_LIMIT;
    verdict(
        "geometry oracle equivalence",
        pass,
        format!(
            "{GEOMETRY_CASES} cases, {checks} op checks, {} mismatches{}, {:.2}s (limit {}s)",
            failures.len(),
            failures.first().map(|f| format!(" (first: {f})")).unwrap_or_default(),
            took.as_secs_f64(),
            GEOMETRY_TIME_LIMIT.as_secs()
        ),
    )
}

// --------------------------------------------------------------- soundness

fn soundness(model: &Arc<UiModel>, traces: &[(String, Trace)]) -> Verdict {
    let cfg = EstimatorConfig { prune_epsilon: 0.0, ..Default::default() };
    let violations: Vec<String> = traces[..SOUNDNESS_TRACES]
        .par_iter()
        .flat_map_iter(|(name, tr)| {
            let cfg = &cfg;
            [StartMode::Known, StartMode::Unknown].into_iter().filter_map(move |start| {
                let p = prepare(model, tr, start, false);
                match check_soundness(model, &p, start, cfg.clone()) {
                    Ok(None) => None,
                    Ok(Some(v)) => Some(format!("{name} {} event {} in {}", start.as_str(), v.index, v.true_state)),
                    Err(e) => Some(format!("{name} {}: {e}", start.as_str())),
                }
            })
        })
        .collect();
    verdict(
        "estimator soundness",
        violations.is_empty(),
        format!(
            "{SOUNDNESS_TRACES} traces x 2 start modes, prune_epsilon 0, {} violations{}",
            violations.len(),
            violations.first().map(|v| format!(" (first: {v})")).unwrap_or_default()
        ),
    )
}

// --------------------------------------------------------------- exactness

fn exactness() -> Verdict {
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    let mut runs = 0;
    for i in 0..EXACT_MODELS {
        let mut rng = ChaCha8Rng::seed_from_u64(7000 + i as u64);
        let model = Arc::new(common::toy_model(&mut rng));
        let trace = common::toy_trace(&mut rng, EXACT_MAX_CLICKS);
        for scheme in [TransitionScheme::EqualTransitions, TransitionScheme::ElementArea] {
            for detect in [false, true] {
                for known in [true, false] {
                    runs += 1;
                    let cfg = EstimatorConfig {
                        transition_scheme: scheme,
                        element_detection: detect,
                        prune_epsilon: 0.0,
                        ..Default::default()
                    };
                    let mut est = if known {
                        Estimator::init_known(model.clone(), &model.start_state, None, cfg.clone()).unwrap()
                    } else {
                        Estimator::init_unknown(model.clone(), cfg.clone()).unwrap()
                    };
                    let mut oracle = common::Enumeration::new(&model, cfg, known);
                    for (k, e) in trace.events.iter().enumerate() {
                        est.observe(e).unwrap();
                        oracle.observe(e);
                        let want = oracle.state_probs();
                        let got = est.estimate().state_probs;
                        let err = want.iter().zip(&got).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                        worst = worst.max(err);
                        if err > EXACT_TOL {
                            failures.push(format!("model {i} {scheme:?} detect={detect} known={known} event {k}: {err:e}"));
                            break;
                        }
                    }
                }
            }
        }
    }
    verdict(
        "posterior exactness",
        failures.is_empty(),
        format!(
            "{EXACT_MODELS} toy models, {runs} runs, max abs error {worst:.1e} (tol {EXACT_TOL:e}), {} failures{}",
            failures.len(),
            failures.first().map(|f| format!(" (first: {f})")).unwrap_or_default()
        ),
    )
}

// ------------------------------------------------------ accuracy and area

fn run_track(model: &Arc<UiModel>, traces: &[(String, Trace)], start: StartMode, cfg: &EstimatorConfig, touch: bool) -> Vec<Vec<ClickRow>> {
    traces
        .par_iter()
        .map(|(name, tr)| {
            let p = prepare(model, tr, start, touch);
            track(model, name, &p, start, cfg.clone()).expect("tracking succeeds").rows
        })
        .collect()
}

fn accuracy(model: &Arc<UiModel>, traces: &[(String, Trace)]) -> Vec<Verdict> {
    let cfg = EstimatorConfig::default();
    let known = run_track(model, traces, StartMode::Known, &cfg, false);
    let unknown = run_track(model, traces, StartMode::Unknown, &cfg, false);
    let ck = correct_rate_at(&known, ACCURACY_CLICK);
    let cu = correct_rate_at(&unknown, ACCURACY_CLICK);
    let ak = small_area_rate_at(&known, AREA_CLICK_KNOWN, AREA_MAX_PCT);
    let au = small_area_rate_at(&unknown, AREA_CLICK_UNKNOWN, AREA_MAX_PCT);
    vec![
        verdict(
            "accuracy: correct state",
            ck >= KNOWN_MIN_CORRECT && cu >= UNKNOWN_MIN_CORRECT,
            format!(
                "{} traces, click {ACCURACY_CLICK}: known {:.1}% (min {:.0}%), unknown {:.1}% (min {:.0}%)",
                traces.len(),
                ck * 100.0,
                KNOWN_MIN_CORRECT * 100.0,
                cu * 100.0,
                UNKNOWN_MIN_CORRECT * 100.0
            ),
        ),
        verdict(
            "accuracy: uncertainty area",
            ak >= AREA_MIN_FRACTION && au >= AREA_MIN_FRACTION,
            format!(
                "area <= {AREA_MAX_PCT}% of screen: known click {AREA_CLICK_KNOWN} {:.1}% of traces, unknown click {AREA_CLICK_UNKNOWN} {:.1}% (min {:.0}%)",
                ak * 100.0,
                au * 100.0,
                AREA_MIN_FRACTION * 100.0
            ),
        ),
    ]
}

fn option_matrix(model: &Arc<UiModel>, traces: &[(String, Trace)], train: &[(String, Trace)]) -> Verdict {
    let train: Vec<Trace> = train.iter().map(|(_, t)| t.clone()).collect();
    let mut weighted = (**model).clone();
    profile_weights(model, &train).apply_to(&mut weighted);
    let weighted = Arc::new(weighted);
    let mut ok = true;
    let mut cells = Vec::new();
    for start in [StartMode::Known, StartMode::Unknown] {
        for scheme in [TransitionScheme::EqualTransitions, TransitionScheme::ElementArea] {
            let [base, detect, apriori] = option_columns(scheme);
            let rb = correct_rate_at(&run_track(model, traces, start, &base, false), ACCURACY_CLICK);
            let rd = correct_rate_at(&run_track(model, traces, start, &detect, false), ACCURACY_CLICK);
            let ra = correct_rate_at(&run_track(&weighted, traces, start, &apriori, false), ACCURACY_CLICK);
            ok &= rd - rb >= DETECTION_MIN_GAIN && (ra - rd).abs() <= APRIORI_MAX_CHANGE;
            cells.push(format!(
                "{} {}: {:.0} -> {:.0} -> {:.0}",
                start.as_str(),
                scheme.as_str(),
                rb * 100.0,
                rd * 100.0,
                ra * 100.0
            ));
        }
    }
    verdict(
        "option matrix ordering",
        ok,
        format!(
            "correct % at click {ACCURACY_CLICK}, base -> +detect -> +apriori (gain >= {:.0}, apriori change <= {:.0}): {}",
            DETECTION_MIN_GAIN * 100.0,
            APRIORI_MAX_CHANGE * 100.0,
            cells.join("; ")
        ),
    )
}

fn touchscreen(model: &Arc<UiModel>, traces: &[(String, Trace)]) -> Verdict {
    let rows = run_track(model, traces, StartMode::Known, &EstimatorConfig::default(), true);
    let r = correct_rate_at(&rows, TOUCH_CLICK);
    verdict(
        "touchscreen",
        r >= TOUCH_MIN_CORRECT,
        format!("{} converted traces, correct at click {TOUCH_CLICK}: {:.1}% (min {:.0}%)", rows.len(), r * 100.0, TOUCH_MIN_CORRECT * 100.0),
    )
}

// ------------------------------------------------------------- performance

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn performance(model: &Arc<UiModel>, traces: &[(String, Trace)]) -> Verdict {
    let cfg = EstimatorConfig::default();
    let mut medians = Vec::new();
    let mut curve = String::new();
    for start in [StartMode::Known, StartMode::Unknown] {
        // sequential: wall-clock timings
        let rows: Vec<_> = traces
            .iter()
            .flat_map(|(name, tr)| {
                let p = prepare(model, tr, start, false);
                bench_trace(model, name, &p, start, cfg.clone()).expect("bench succeeds")
            })
            .collect();
        medians.push(median(rows.iter().filter(|r| r.click == PERF_CLICK).map(|r| r.micros).collect()));
        let max_click = rows.iter().map(|r| r.click).max().unwrap_or(0).min(30);
        let growth: Vec<String> = (1..=max_click)
            .map(|c| format!("{:.0}", median(rows.iter().filter(|r| r.click == c).map(|r| r.trackers as f64).collect())))
            .collect();
        curve.push_str(&format!("\n      tracker-count growth, {} start, median per click 1..{max_click}: {}", start.as_str(), growth.join(" ")));
    }
    let (k, u) = (medians[0], medians[1]);
    verdict(
        "performance",
        k < PERF_KNOWN_MEDIAN.as_micros() as f64 && u < PERF_UNKNOWN_MEDIAN.as_micros() as f64,
        format!(
            "median per-click time at click {PERF_CLICK}: known {:.3} ms (limit {} ms), unknown {:.3} ms (limit {} ms){curve}",
            k / 1000.0,
            PERF_KNOWN_MEDIAN.as_millis(),
            u / 1000.0,
            PERF_UNKNOWN_MEDIAN.as_millis()
        ),
    )
}

// ------------------------------------------------------------------ attack

fn attack_runs(model: &Arc<UiModel>, traces: &[(String, Trace)], spec: &AttackSpec) -> Vec<AttackRun> {
    traces
        .par_iter()
        .map(|(_, tr)| run_attack(model, tr, spec, EstimatorConfig::default(), None).expect("attack runs"))
        .collect()
}

fn attack_mechanics(model: &Arc<UiModel>, traces: &[(String, Trace)]) -> Vec<Verdict> {
    let elements = target_elements(model);
    let mut conf_ok = true;
    let mut conf_launched_any = true;
    let mut vis_ok = true;
    let mut conf_cells = Vec::new();
    let mut worst_vis_ratio = 0.0f64;
    for &speed in &ATTACK_SPEEDS_MS {
        for el in &elements {
            let v = default_malicious_value(model, el).unwrap();
            let spec = AttackSpec::new(Variant::ConfirmationDriven, el, v).with_interval(speed);
            let runs = attack_runs(model, traces, &spec);
            let launched: Vec<_> = runs.iter().filter(|r| r.outcome.launched).collect();
            let good = launched
                .iter()
                .filter(|r| r.outcome.success && r.outcome.user_value_shown && r.outcome.cursor_restored)
                .count();
            conf_ok &= good == launched.len();
            conf_launched_any &= !launched.is_empty();
            for r in &launched {
                let bound = (r.outcome.injected_event_count + 1) * speed;
                worst_vis_ratio = worst_vis_ratio.max(r.outcome.visible_ms as f64 / bound as f64);
                vis_ok &= r.outcome.visible_ms <= bound;
            }
            conf_cells.push(format!("{el}@{speed}ms {good}/{}", launched.len()));
        }
    }
    let mut elem_ok = true;
    let mut elem_cells = Vec::new();
    for el in &elements {
        let v = default_malicious_value(model, el).unwrap();
        let spec = AttackSpec::new(Variant::ElementDriven, el, v);
        let runs = attack_runs(model, traces, &spec);
        let edited: Vec<_> = runs.iter().filter(|r| r.edit_seen).collect();
        let good = edited
            .iter()
            .filter(|r| r.outcome.launched && r.outcome.success && r.outcome.cursor_restored)
            .count();
        elem_ok &= good == edited.len();
        elem_cells.push(format!("{el} {good}/{}", edited.len()));
    }
    vec![
        verdict(
            "attack: confirmation-driven mechanics",
            conf_ok && conf_launched_any,
            format!(
                "{} traces, mechanically successful / launched: {}",
                traces.len(),
                conf_cells.join(", ")
            ),
        ),
        verdict(
            "attack: element-driven mechanics",
            elem_ok,
            format!("successful / traces with an edit while ready: {}", elem_cells.join(", ")),
        ),
        verdict(
            "attack: visible time bound",
            vis_ok,
            format!("visible_ms <= (injected + 1) x step on every launched confirmation run; max ratio {worst_vis_ratio:.3}"),
        ),
    ]
}

// ----------------------------------------------------------------- service

fn service_equivalence(model: &Arc<UiModel>, traces: &[(String, Trace)]) -> Verdict {
    let mut registry = Registry::default();
    registry.insert_as("pacemaker", (**model).clone());
    let registry = Arc::new(registry);
    let elements = target_elements(model);
    let specs: Vec<AttackSpec> = [Variant::ConfirmationDriven, Variant::ElementDriven]
        .into_iter()
        .flat_map(|v| elements.iter().map(move |el| (v, el.clone())))
        .map(|(v, el)| AttackSpec::new(v, &el, default_malicious_value(model, &el).unwrap()).with_interval(125))
        .collect();
    let mismatches: Vec<String> = specs
        .par_iter()
        .flat_map_iter(|spec| {
            let registry = registry.clone();
            traces.iter().filter_map(move |(name, tr)| {
                let want = run_attack(model, tr, spec, EstimatorConfig::default(), None).expect("attack runs").log();
                let mut s = ServiceSession::new("acc", registry.clone(), false);
                let mut frames = Vec::new();
                let mut send = |m: ClientMsg| {
                    for f in s.handle_text(&encode_client(&m)) {
                        let text = blindtrack::service::encode(&f);
                        frames.push(decode_server(&text).expect("server frame decodes"));
                    }
                };
                send(ClientMsg::Open { model: "pacemaker".into(), spec: Some(spec.clone()), config: None });
                for (seq, e) in tr.events.iter().enumerate() {
                    send(ClientMsg::Event { seq: seq as u64, event: *e });
                }
                send(ClientMsg::Close);
                let got = log_from_frames(&frames);
                (got != want).then(|| format!("{name} {} {}", spec.variant.as_str(), spec.target_element))
            })
        })
        .collect();
    verdict(
        "service equivalence",
        mismatches.is_empty(),
        format!(
            "{} traces x {} specs streamed as JSON frames, {} logs differ from run_attack{}",
            traces.len(),
            specs.len(),
            mismatches.len(),
            mismatches.first().map(|m| format!(" (first: {m})")).unwrap_or_default()
        ),
    )
}

fn main() -> ExitCode {
    let t0 = Instant::now();
    let model = Arc::new(UiModel::pacemaker());
    let mut verdicts = Vec::new();
    let mut report = |v: Verdict| {
        println!("[{}] {}: {}", if v.pass { "PASS" } else { "FAIL" }, v.name, v.detail);
        verdicts.push(v.pass);
    };
    report(geometry());
    let traces = corpus(&model, CORPUS_SEED, CORPUS_TRACES);
    report(soundness(&model, &traces));
    report(exactness());
    accuracy(&model, &traces).into_iter().for_each(&mut report);
    let train = corpus(&model, TRAIN_SEED, CORPUS_TRACES);
    report(option_matrix(&model, &traces, &train));
    report(touchscreen(&model, &traces));
    report(performance(&model, &traces));
    let attack = corpus(&model, ATTACK_SEED, ATTACK_TRACES);
    attack_mechanics(&model, &attack).into_iter().for_each(&mut report);
    report(service_equivalence(&model, &attack));
    let failed = verdicts.iter().filter(|&&p| !p).count();
    println!(
        "acceptance: {} passed, {failed} failed, {:.1}s",
        verdicts.len() - failed,
        t0.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
