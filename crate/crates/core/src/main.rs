use std::collections::BTreeMap;
use std::fs;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use blindtrack::attack::{default_malicious_value, run_attack, target_elements, AttackOutcome, AttackSpec, Variant};
use blindtrack::estimator::{EstimatorConfig, TransitionScheme};
use blindtrack::eval::{
    bench_trace, config_label, correct_rate_at, prepare, profile_weights, small_area_rate_at, track, ClickRow,
    LatencyRow, StartMode, WeightTable,
};
use blindtrack::model::{validate, ElementKind, UiModel, Value};
use blindtrack::service::{serve, Registry, ServeOptions};
use blindtrack::trace::{
    generate, load_corpus, serialize_trace, write_corpus, InputMode, Manifest, Task, Trace, UserProfile,
};

/// Version of the CSV column layouts written by this tool.
const CSV_SCHEMA: u32 = 1;

#[derive(Parser)]
#[command(name = "blindtrack", version, about = "Blind UI-state tracking and interposer simulation")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check a model file and list its violations.
    Validate { model: PathBuf },
    /// Generate a synthetic trace corpus.
    GenTraces(GenArgs),
    /// Count element clicks in a corpus into an a-priori weight table.
    Profile(ProfileArgs),
    /// Per-click tracking accuracy and uncertainty area.
    Track(TrackArgs),
    /// Per-click processing time and tracker counts.
    Bench(BenchArgs),
    /// Run attack specs over a corpus.
    Attack(AttackArgs),
    /// Serve interposer sessions over a web-socket.
    Serve(ServeArgs),
}

#[derive(Args)]
struct ModelArg {
    /// Model file (defaults to the bundled pacemaker model).
    #[arg(long)]
    model: Option<PathBuf>,
}

impl ModelArg {
    fn load(&self) -> Result<UiModel> {
        match &self.model {
            Some(p) => UiModel::load_file(p).with_context(|| format!("loading {}", p.display())),
            None => Ok(UiModel::pacemaker()),
        }
    }
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    model: ModelArg,
    /// Task file (defaults to the bundled pacemaker task).
    #[arg(long)]
    task: Option<PathBuf>,
    /// User profile TOML.
    #[arg(long)]
    profile: Option<PathBuf>,
    #[arg(long, short, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Put the first N traces in `train/` and the rest in `eval/`.
    #[arg(long)]
    split: Option<usize>,
    /// Output directory, or a `.trace` file when n = 1.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ProfileArgs {
    #[command(flatten)]
    model: ModelArg,
    #[arg(long)]
    traces: PathBuf,
    /// Weights file to write (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TrackArgs {
    #[command(flatten)]
    #[serde(skip)]
    model: ModelArg,
    #[arg(long)]
    #[serde(skip)]
    traces: PathBuf,
    /// Repeatable: known, unknown.
    #[arg(long)]
    start: Vec<StartMode>,
    /// Repeatable: equal, area.
    #[arg(long)]
    scheme: Vec<TransitionScheme>,
    /// Repeatable: on, off.
    #[arg(long, value_parser = on_off)]
    detect: Vec<bool>,
    /// Repeatable: off or a weights file from `profile`.
    #[arg(long)]
    apriori: Vec<String>,
    /// Run the option table: both schemes x {base, +detect, +detect+apriori}.
    /// Uses the first `--apriori` file for the last column.
    #[arg(long)]
    matrix: bool,
    /// Convert traces to absolute touch input first.
    #[arg(long)]
    touchscreen: bool,
    #[arg(long)]
    prune_epsilon: Option<f64>,
    /// TOML file with any of the flags above; flags given on the command
    /// line win.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

impl Default for ModelArg {
    fn default() -> Self {
        Self { model: None }
    }
}

fn on_off(s: &str) -> Result<bool, String> {
    match s {
        "on" => Ok(true),
        "off" => Ok(false),
        _ => Err(format!("expected on|off, got `{s}`")),
    }
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    model: ModelArg,
    #[arg(long)]
    traces: PathBuf,
    #[arg(long, default_value = "equal")]
    scheme: TransitionScheme,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AttackArgs {
    #[command(flatten)]
    model: ModelArg,
    #[arg(long)]
    traces: PathBuf,
    /// Repeatable: element, confirmation (default both).
    #[arg(long)]
    variant: Vec<Variant>,
    /// Repeatable target element ids (default: every target slider and
    /// text field).
    #[arg(long)]
    element: Vec<String>,
    /// Repeatable injection step interval in ms (default 10, 125, 250).
    #[arg(long)]
    speed: Vec<u64>,
    /// Repeatable ELEMENT=VALUE malicious values.
    #[arg(long)]
    value: Vec<String>,
    #[arg(long, default_value_t = blindtrack::attack::DEFAULT_ELEMENT_WAIT_MS)]
    wait_ms: u64,
    /// Also write one decision log per run.
    #[arg(long)]
    logs: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8765")]
    listen: String,
    /// Directory of extra `.model` files.
    #[arg(long)]
    models: Option<PathBuf>,
    /// Allow `debug` requests.
    #[arg(long)]
    debug: bool,
    /// Send injected frames immediately instead of pacing them.
    #[arg(long)]
    no_pace: bool,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let pool = thread_pool()?;
    pool.install(|| match cli.cmd {
        Cmd::Validate { model } => cmd_validate(&model),
        Cmd::GenTraces(a) => cmd_gen(a),
        Cmd::Profile(a) => cmd_profile(a),
        Cmd::Track(a) => cmd_track(a),
        Cmd::Bench(a) => cmd_bench(a),
        Cmd::Attack(a) => cmd_attack(a),
        Cmd::Serve(a) => cmd_serve(a),
    })
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("BLINDTRACK_THREADS") {
        let n: usize = v.parse().with_context(|| format!("BLINDTRACK_THREADS=`{v}`"))?;
        b = b.num_threads(n.max(1));
    }
    Ok(b.build()?)
}

fn cmd_validate(path: &Path) -> Result<()> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let raw: UiModel = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let v = validate(&raw);
    for x in &v {
        println!("{x}");
    }
    if !v.is_empty() {
        bail!("{} violation(s)", v.len());
    }
    println!("ok: {} states", raw.states.len());
    Ok(())
}

fn cmd_gen(a: GenArgs) -> Result<()> {
    let model = a.model.load()?;
    let task = match &a.task {
        Some(p) => Task::parse(&fs::read_to_string(p)?)?,
        None => Task::pacemaker(),
    };
    let profile: UserProfile = match &a.profile {
        Some(p) => toml::from_str(&fs::read_to_string(p)?)?,
        None => UserProfile::default(),
    };
    profile.check()?;
    let traces: Vec<(String, Trace)> = (0..a.n)
        .into_par_iter()
        .map(|i| {
            let seed = a.seed.wrapping_add(i as u64);
            generate(&model, &profile, &task, seed).map(|t| (format!("trace-{i:04}"), t))
        })
        .collect::<Result<_, _>>()?;
    if a.out.extension().is_some_and(|x| x == "trace") {
        if a.n != 1 {
            bail!("a .trace output takes exactly one trace (n = {})", a.n);
        }
        fs::write(&a.out, serialize_trace(&traces[0].1))?;
        return Ok(());
    }
    let manifest = Manifest {
        model: model.name.clone().unwrap_or_default(),
        task: task.name.clone(),
        seed: a.seed,
        traces: Vec::new(),
    };
    match a.split {
        Some(k) if k > a.n => bail!("--split {k} exceeds n = {}", a.n),
        Some(k) => {
            write_corpus(&a.out.join("train"), &traces[..k], manifest.clone())?;
            write_corpus(&a.out.join("eval"), &traces[k..], manifest)?;
        }
        None => write_corpus(&a.out, &traces, manifest)?,
    }
    eprintln!("wrote {} traces to {}", traces.len(), a.out.display());
    Ok(())
}

fn cmd_profile(a: ProfileArgs) -> Result<()> {
    let model = a.model.load()?;
    let corpus = load_corpus(&a.traces)?;
    let traces: Vec<Trace> = corpus.into_iter().map(|(_, t)| t).collect();
    let w = profile_weights(&model, &traces);
    match a.out {
        Some(p) => fs::write(&p, w.to_toml())?,
        None => print!("{}", w.to_toml()),
    }
    Ok(())
}

fn load_weights(path: &str) -> Result<WeightTable> {
    let text = fs::read_to_string(path).with_context(|| format!("reading weights {path}"))?;
    Ok(WeightTable::parse(&text).with_context(|| format!("parsing weights {path}"))?)
}

/// One estimator configuration to run, with the model it runs on.
struct Column {
    label: String,
    cfg: EstimatorConfig,
    model: Arc<UiModel>,
}

fn track_columns(a: &TrackArgs, model: &UiModel) -> Result<Vec<Column>> {
    let eps = a.prune_epsilon.unwrap_or(EstimatorConfig::default().prune_epsilon);
    let plain = Arc::new(model.clone());
    let weighted = |path: &str| -> Result<Arc<UiModel>> {
        let mut m = model.clone();
        load_weights(path)?.apply_to(&mut m);
        Ok(Arc::new(m))
    };
    let mut cols = Vec::new();
    if a.matrix {
        let Some(path) = a.apriori.iter().find(|p| *p != "off") else {
            bail!("--matrix needs --apriori WEIGHTS for its last column");
        };
        let wm = weighted(path)?;
        for scheme in [TransitionScheme::EqualTransitions, TransitionScheme::ElementArea] {
            for (detect, apriori) in [(false, false), (true, false), (true, true)] {
                let cfg = EstimatorConfig {
                    transition_scheme: scheme,
                    element_detection: detect,
                    a_priori: apriori,
                    prune_epsilon: eps,
                    ..Default::default()
                };
                let model = if apriori { wm.clone() } else { plain.clone() };
                cols.push(Column { label: config_label(&cfg), cfg, model });
            }
        }
        return Ok(cols);
    }
    let schemes = if a.scheme.is_empty() { vec![TransitionScheme::EqualTransitions] } else { a.scheme.clone() };
    let detects = if a.detect.is_empty() { vec![true] } else { a.detect.clone() };
    let aprioris = if a.apriori.is_empty() { vec!["off".to_string()] } else { a.apriori.clone() };
    for &scheme in &schemes {
        for &detect in &detects {
            for ap in &aprioris {
                let on = ap != "off";
                let cfg = EstimatorConfig {
                    transition_scheme: scheme,
                    element_detection: detect,
                    a_priori: on,
                    prune_epsilon: eps,
                    ..Default::default()
                };
                let model = if on { weighted(ap)? } else { plain.clone() };
                cols.push(Column { label: config_label(&cfg), cfg, model });
            }
        }
    }
    Ok(cols)
}

#[derive(Debug, Serialize)]
struct TrackSummary {
    start: String,
    config: String,
    traces: usize,
    correct_at_5: f64,
    correct_at_10: f64,
    small_area_at_5: f64,
    small_area_at_10: f64,
    collapses: u32,
}

#[derive(Serialize)]
struct CurveRow {
    start: String,
    config: String,
    click: u32,
    correct_rate: f64,
    median_area_pct: f64,
    median_trackers: f64,
}

fn merge_track_config(mut a: TrackArgs) -> Result<TrackArgs> {
    let Some(path) = a.config.clone() else { return Ok(a) };
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let f: TrackArgs = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if a.start.is_empty() {
        a.start = f.start;
    }
    if a.scheme.is_empty() {
        a.scheme = f.scheme;
    }
    if a.detect.is_empty() {
        a.detect = f.detect;
    }
    if a.apriori.is_empty() {
        a.apriori = f.apriori;
    }
    a.matrix |= f.matrix;
    a.touchscreen |= f.touchscreen;
    a.prune_epsilon = a.prune_epsilon.or(f.prune_epsilon);
    Ok(a)
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let i = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[i]
}

fn cmd_track(a: TrackArgs) -> Result<()> {
    let a = merge_track_config(a)?;
    let model = a.model.load()?;
    let corpus = load_corpus(&a.traces)?;
    let starts = if a.start.is_empty() { vec![StartMode::Known] } else { a.start.clone() };
    let cols = track_columns(&a, &model)?;
    let mut all_rows: Vec<ClickRow> = Vec::new();
    let mut summaries = Vec::new();
    let mut curves = Vec::new();
    let mut matrix: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for &start in &starts {
        for col in &cols {
            let results: Vec<(Vec<ClickRow>, u32)> = corpus
                .par_iter()
                .map(|(name, tr)| {
                    let p = prepare(&col.model, tr, start, a.touchscreen);
                    track(&col.model, name, &p, start, col.cfg.clone()).map(|r| (r.rows, r.collapses))
                })
                .collect::<Result<_, _>>()?;
            let collapses = results.iter().map(|r| r.1).sum();
            let rows: Vec<Vec<ClickRow>> = results.into_iter().map(|r| r.0).collect();
            let label = if a.touchscreen && !col.label.ends_with("+touch") {
                format!("{}+touch", col.label)
            } else {
                col.label.clone()
            };
            let max_click = rows.iter().map(Vec::len).max().unwrap_or(0) as u32;
            for click in 1..=max_click {
                let at: Vec<&ClickRow> = rows.iter().filter_map(|r| r.get(click as usize - 1)).collect();
                curves.push(CurveRow {
                    start: start.as_str().into(),
                    config: label.clone(),
                    click,
                    correct_rate: at.iter().filter(|r| r.correct).count() as f64 / at.len() as f64,
                    median_area_pct: median(at.iter().map(|r| r.area_pct).collect()),
                    median_trackers: median(at.iter().map(|r| r.trackers as f64).collect()),
                });
            }
            let s = TrackSummary {
                start: start.as_str().into(),
                config: label.clone(),
                traces: rows.len(),
                correct_at_5: correct_rate_at(&rows, 5),
                correct_at_10: correct_rate_at(&rows, 10),
                small_area_at_5: small_area_rate_at(&rows, 5, 1.0),
                small_area_at_10: small_area_rate_at(&rows, 10, 1.0),
                collapses,
            };
            matrix.entry(start.as_str().into()).or_default().insert(label.clone(), s.correct_at_10);
            summaries.push(s);
            all_rows.extend(rows.into_iter().flatten().map(|mut r| {
                r.config = label.clone();
                r
            }));
        }
    }
    all_rows.sort_by(|x, y| (&x.config, &x.trace, x.click).cmp(&(&y.config, &y.trace, y.click)));
    println!("{:<8} {:<26} {:>6} {:>8} {:>8} {:>9} {:>9}", "start", "config", "traces", "ok@5", "ok@10", "<=1%@5", "<=1%@10");
    for s in &summaries {
        println!(
            "{:<8} {:<26} {:>6} {:>8.3} {:>8.3} {:>9.3} {:>9.3}",
            s.start, s.config, s.traces, s.correct_at_5, s.correct_at_10, s.small_area_at_5, s.small_area_at_10
        );
    }
    if let Some(out) = &a.out {
        fs::create_dir_all(out)?;
        write_csv(&out.join("clicks.csv"), &all_rows)?;
        write_csv(&out.join("curve.csv"), &curves)?;
        let summary = serde_json::json!({
            "csv_schema": CSV_SCHEMA,
            "touchscreen": a.touchscreen,
            "summaries": summaries,
            "correct_at_10": matrix,
        });
        fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    }
    Ok(())
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    let model = Arc::new(a.model.load()?);
    let corpus = load_corpus(&a.traces)?;
    let cfg = EstimatorConfig { transition_scheme: a.scheme, ..Default::default() };
    let mut rows: Vec<LatencyRow> = Vec::new();
    let mut summary = BTreeMap::new();
    let mut growth = Vec::new();
    // sequential on purpose: timings are wall-clock
    for start in [StartMode::Known, StartMode::Unknown] {
        let mut these = Vec::new();
        for (name, tr) in &corpus {
            let p = prepare(&model, tr, start, false);
            these.extend(bench_trace(&model, name, &p, start, cfg.clone())?);
        }
        let mut all: Vec<f64> = these.iter().map(|r| r.micros).collect();
        all.sort_by(f64::total_cmp);
        let at10 = median(these.iter().filter(|r| r.click == 10).map(|r| r.micros).collect());
        let max_click = these.iter().map(|r| r.click).max().unwrap_or(0);
        for click in 1..=max_click {
            let at: Vec<&LatencyRow> = these.iter().filter(|r| r.click == click).collect();
            growth.push(serde_json::json!({
                "start": start.as_str(),
                "click": click,
                "median_trackers": median(at.iter().map(|r| r.trackers as f64).collect()),
                "max_trackers": at.iter().map(|r| r.trackers).max().unwrap_or(0),
                "median_micros": median(at.iter().map(|r| r.micros).collect()),
            }));
        }
        println!(
            "{:<8} clicks {:>6}  p50 {:>9.1}us  p90 {:>9.1}us  p99 {:>9.1}us  max {:>9.1}us  median@10 {:>9.1}us",
            start.as_str(),
            all.len(),
            percentile(&all, 0.5),
            percentile(&all, 0.9),
            percentile(&all, 0.99),
            all.last().copied().unwrap_or(0.0),
            at10
        );
        summary.insert(
            start.as_str(),
            serde_json::json!({
                "clicks": all.len(),
                "p50_us": percentile(&all, 0.5),
                "p90_us": percentile(&all, 0.9),
                "p99_us": percentile(&all, 0.99),
                "max_us": all.last().copied().unwrap_or(0.0),
                "median_at_click_10_us": at10,
            }),
        );
        rows.extend(these);
    }
    if let Some(out) = &a.out {
        fs::create_dir_all(out)?;
        write_csv(&out.join("latency.csv"), &rows)?;
        let s = serde_json::json!({ "csv_schema": CSV_SCHEMA, "config": config_label(&cfg), "latency": summary, "growth": growth });
        fs::write(out.join("summary.json"), serde_json::to_string_pretty(&s)? + "\n")?;
    }
    Ok(())
}

#[derive(Serialize)]
struct OutcomeRow {
    trace: String,
    variant: String,
    element: String,
    speed_ms: u64,
    launched: bool,
    success: bool,
    visible_ms: u64,
    injected_event_count: u64,
    user_value_shown: bool,
    cursor_restored: bool,
    edit_seen: bool,
}

fn cmd_attack(a: AttackArgs) -> Result<()> {
    let model = Arc::new(a.model.load()?);
    let corpus = load_corpus(&a.traces)?;
    if corpus.iter().any(|(_, t)| t.mode() != InputMode::RelativeMouse) {
        bail!("attacks need relative-mouse traces");
    }
    let variants = if a.variant.is_empty() { vec![Variant::ConfirmationDriven, Variant::ElementDriven] } else { a.variant.clone() };
    let elements = if a.element.is_empty() { target_elements(&model) } else { a.element.clone() };
    let speeds = if a.speed.is_empty() { vec![10, 125, 250] } else { a.speed.clone() };
    let mut values: BTreeMap<String, Value> = BTreeMap::new();
    for kv in &a.value {
        let (k, v) = kv.split_once('=').with_context(|| format!("--value `{kv}` is not ELEMENT=VALUE"))?;
        let kind = model.find_element(k).map(|(_, e)| e.kind);
        let v = match (kind, v.parse::<f64>()) {
            (Some(ElementKind::Slider), Ok(n)) => Value::Number(n),
            _ => Value::Text(v.to_string()),
        };
        values.insert(k.to_string(), v);
    }
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    if let (Some(out), true) = (&a.out, a.logs) {
        fs::create_dir_all(out.join("logs"))?;
    }
    for &variant in &variants {
        for el in &elements {
            let value = match values.get(el) {
                Some(v) => v.clone(),
                None => default_malicious_value(&model, el)?,
            };
            for &speed in &speeds {
                let spec = AttackSpec {
                    variant,
                    target_element: el.clone(),
                    malicious_value: value.clone(),
                    step_interval_ms: speed,
                    element_wait_ms: a.wait_ms,
                };
                spec.resolve(&model)?;
                let runs: Vec<(String, AttackOutcome, bool, String)> = corpus
                    .par_iter()
                    .map(|(name, tr)| {
                        run_attack(&model, tr, &spec, EstimatorConfig::default(), None)
                            .map(|r| (name.clone(), r.outcome.clone(), r.edit_seen, if a.logs { r.log() } else { String::new() }))
                    })
                    .collect::<Result<_, _>>()?;
                let launched: Vec<&AttackOutcome> = runs.iter().map(|r| &r.1).filter(|o| o.launched).collect();
                let ok = launched.iter().filter(|o| o.success).count();
                let vis: Vec<f64> = launched.iter().map(|o| o.visible_ms as f64).collect();
                let s = serde_json::json!({
                    "variant": variant.as_str(),
                    "element": el,
                    "speed_ms": speed,
                    "malicious_value": value.to_text(),
                    "runs": runs.len(),
                    "launch_rate": launched.len() as f64 / runs.len().max(1) as f64,
                    "success_rate_launched": ok as f64 / launched.len().max(1) as f64,
                    "success_rate": ok as f64 / runs.len().max(1) as f64,
                    "median_visible_ms": median(vis.clone()),
                    "max_visible_ms": vis.iter().copied().fold(0.0, f64::max),
                });
                println!(
                    "{:<12} {:<10} {:>4}ms  launched {:>3}/{:<3}  success {:>3}/{:<3}  median visible {:>7.0}ms",
                    variant.as_str(),
                    el,
                    speed,
                    launched.len(),
                    runs.len(),
                    ok,
                    launched.len(),
                    median(vis)
                );
                summary.push(s);
                for (name, o, edit_seen, log) in runs {
                    if let (Some(out), true) = (&a.out, a.logs) {
                        fs::write(out.join("logs").join(format!("{name}.{}.{el}.{speed}.log", variant.as_str())), log)?;
                    }
                    rows.push(OutcomeRow {
                        trace: name,
                        variant: variant.as_str().into(),
                        element: el.clone(),
                        speed_ms: speed,
                        launched: o.launched,
                        success: o.success,
                        visible_ms: o.visible_ms,
                        injected_event_count: o.injected_event_count,
                        user_value_shown: o.user_value_shown,
                        cursor_restored: o.cursor_restored,
                        edit_seen,
                    });
                }
            }
        }
    }
    if let Some(out) = &a.out {
        fs::create_dir_all(out)?;
        write_csv(&out.join("outcomes.csv"), &rows)?;
        let s = serde_json::json!({ "csv_schema": CSV_SCHEMA, "groups": summary });
        fs::write(out.join("summary.json"), serde_json::to_string_pretty(&s)? + "\n")?;
    }
    Ok(())
}

fn cmd_serve(a: ServeArgs) -> Result<()> {
    let registry = match &a.models {
        Some(dir) => Registry::load_dir(dir)?,
        None => Registry::bundled(),
    };
    let listener = TcpListener::bind(&a.listen).with_context(|| format!("binding {}", a.listen))?;
    eprintln!(
        "listening on ws://{} (models: {})",
        listener.local_addr()?,
        registry.names().collect::<Vec<_>>().join(", ")
    );
    serve(listener, registry, ServeOptions { debug: a.debug, realtime: !a.no_pace })?;
    Ok(())
}
