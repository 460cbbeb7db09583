mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use janeeye::accel::{
    build_schedule, calibrate_default, fsm_trace, measure_sparsity, simulate_schedule, CalibrationTargets, EnergyCoefficients, HwConfig, SimOptions, SimReport,
    SparsitySource,
};
use janeeye::event_io::{downsample, parse_events, read_frames, write_frame, CountFrames, EventFormat, SensorGeometry, TimeFrames};
use janeeye::model_io::{read_model_file, write_model_file, ModelFile};
use janeeye::network::{
    forward_sequence, frame_to_real, CounterReport, FixedWeights, FloatWeights, Mode, ModelConfig, ModelWeights, Prediction, ReferenceActivations,
};
use janeeye::quantizer::{calibrate_ranges, quantize_model};
use janeeye::tensor::Tensor;
use report::{CliError, ErrorInfo, Manifest, Report, REPORT_SCHEMA_VERSION};
use serde_json::{json, Value};

/// Environment variable naming the default energy coefficients file.
const COEFFICIENTS_ENV: &str = "JANEEYE_COEFFICIENTS";

#[derive(Parser)]
#[command(name = "janeeye", version, about = "Event-based eye tracking pipeline and accelerator model")]
struct Cli {
    /// Write the JSON report here instead of stdout.
    #[arg(long, global = true)]
    report: Option<PathBuf>,
    /// Suppress the human-readable summary on stderr.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Turn an event stream into a frame dump.
    Aggregate(AggregateArgs),
    /// Run a model over a frame dump.
    Infer(InferArgs),
    /// Estimate cycles, latency and energy on the accelerator model.
    Simulate(SimulateArgs),
    /// Convert a float model to fixed point.
    Quantize(QuantizeArgs),
    /// Write a model file with random or zero weights.
    InitModel(InitArgs),
    /// Print a model configuration with its counters.
    DeriveConfig(DeriveArgs),
    /// Fit energy coefficients to a per-frame energy target.
    CalibrateEnergy(CalibrateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum AggMode {
    Time,
    Count,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Auto,
    Csv,
    Binary,
}

#[derive(Args)]
struct AggregateArgs {
    events: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long, value_enum, default_value = "time")]
    mode: AggMode,
    #[arg(long, default_value_t = 10_000)]
    dt_us: u64,
    #[arg(long, default_value_t = 5000)]
    n_evt: usize,
    #[arg(long, default_value_t = 8)]
    downsample: usize,
    /// Start of the first window; defaults to one microsecond before the first event.
    #[arg(long, allow_hyphen_values = true)]
    t0: Option<i64>,
    #[arg(long, default_value_t = 640)]
    width: u16,
    #[arg(long, default_value_t = 480)]
    height: u16,
    #[arg(long, value_enum, default_value = "auto")]
    format: FormatArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum ActsArg {
    Deployed,
    Original,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Reference,
    Fixed,
}

#[derive(Args)]
struct InferArgs {
    model: PathBuf,
    frames: PathBuf,
    #[arg(long, value_enum, default_value = "fixed")]
    mode: ModeArg,
    #[arg(long, value_enum, default_value = "deployed")]
    activations: ActsArg,
    /// CSV with `frame_idx,x,y` in downsampled coordinates.
    #[arg(long)]
    ground_truth: Option<PathBuf>,
    /// Report predictions in sensor coordinates.
    #[arg(long)]
    sensor_coords: bool,
    /// Also run the other mode and report the coordinate delta.
    #[arg(long)]
    compare: bool,
}

#[derive(Args)]
struct SimulateArgs {
    model: PathBuf,
    frames: Option<PathBuf>,
    #[arg(long, env = COEFFICIENTS_ENV)]
    coefficients: Option<PathBuf>,
    /// `measured` (needs frames) or `inject=S`; defaults to measured with
    /// frames and inject=0.4 without.
    #[arg(long)]
    sparsity: Option<String>,
    /// Comma separated injected sparsities, simulated in parallel.
    #[arg(long, value_delimiter = ',')]
    sweep: Vec<f64>,
    #[arg(long)]
    clock_hz: Option<f64>,
    /// JSON hardware description overriding the defaults.
    #[arg(long)]
    hw: Option<PathBuf>,
    #[arg(long)]
    include_leakage: bool,
    #[arg(long)]
    fsm_trace: bool,
}

#[derive(Args)]
struct QuantizeArgs {
    model: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    /// Frame dump used to check activation ranges.
    #[arg(long)]
    calibration_frames: Option<PathBuf>,
    /// Drop the float weights from the output file.
    #[arg(long)]
    fixed_only: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightsArg {
    Float,
    Fixed,
    Both,
}

#[derive(Args)]
struct InitArgs {
    #[arg(short, long)]
    output: PathBuf,
    /// JSON model configuration; defaults to the built-in model.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// All parameters zero except the head bias, which points at the frame centre.
    #[arg(long)]
    zero_weights: bool,
    #[arg(long, value_enum, default_value = "both")]
    weights: WeightsArg,
}

#[derive(Args)]
struct DeriveArgs {
    /// Take the configuration from a model file.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    hw: Option<PathBuf>,
    #[arg(long, default_value_t = 18.9)]
    energy_uj: f64,
    #[arg(long, default_value_t = 0.40)]
    sparsity: f64,
    #[arg(long, default_value_t = 0.35)]
    reduction: f64,
    #[arg(long, default_value_t = 0.18)]
    leakage_mw: f64,
}

struct Outcome {
    results: Value,
    counters: Value,
    summary: String,
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::io(&path.display().to_string(), e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(&path.display().to_string(), e))
}

fn load_model(path: &Path) -> Result<ModelFile, CliError> {
    read_model_file(path).map_err(|e| {
        let e = CliError::from(e);
        CliError::new(e.code, format!("{}: {}", path.display(), e.message))
    })
}

fn load_frames(path: &Path) -> Result<Vec<Tensor<i32>>, CliError> {
    Ok(read_frames(&read_bytes(path)?)?)
}

fn load_hw(path: Option<&Path>) -> Result<HwConfig, CliError> {
    match path {
        None => Ok(HwConfig::default()),
        Some(p) => serde_json::from_slice(&read_bytes(p)?).map_err(|e| CliError::new("config", format!("{}: {e}", p.display()))),
    }
}

fn topology_counters(config: &ModelConfig) -> Result<Value, CliError> {
    Ok(json!({
        "params": config.param_count()?,
        "macs_per_frame": config.mac_count()?,
        "flops_per_frame": config.flops()?,
        "elementwise_ops_per_frame": config.elementwise_ops()?,
    }))
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

fn cmd_aggregate(a: &AggregateArgs, m: &mut Manifest) -> Result<Outcome, CliError> {
    m.input("events", a.events.display());
    m.output("frames", a.output.display());
    m.param(
        "mode",
        match a.mode {
            AggMode::Time => "time",
            AggMode::Count => "count",
        },
    );
    m.param("dt_us", a.dt_us);
    m.param("n_evt", a.n_evt);
    m.param("downsample", a.downsample);
    m.param("t0", a.t0);
    m.param("sensor", [a.width, a.height]);
    let bytes = read_bytes(&a.events)?;
    let format = match a.format {
        FormatArg::Auto => EventFormat::sniff(&bytes),
        FormatArg::Csv => EventFormat::Csv,
        FormatArg::Binary => EventFormat::Binary,
    };
    m.param("format", format);
    let geom = SensorGeometry { width: a.width, height: a.height };
    let events = parse_events(&bytes, format, geom)?;
    let mut dump = Vec::new();
    let mut shape = None;
    let mut emit = |f: janeeye::event_io::EventFrame| -> Result<(), CliError> {
        let d = if a.downsample == 1 { f } else { downsample(&f, a.downsample)? };
        shape = Some([d.data.c, d.data.h, d.data.w]);
        write_frame(&mut dump, &d.data).map_err(|e| CliError::io("frame buffer", e))
    };
    if a.downsample == 0 {
        return Err(CliError::new("invalid_argument", "downsample factor must be positive"));
    }
    let span_s = match (events.first(), events.last()) {
        (Some(f), Some(l)) => (l.t - f.t) as f64 * 1e-6,
        _ => 0.0,
    };
    let (frames, excluded, unconsumed, rate) = match a.mode {
        AggMode::Time => {
            let t0 = a.t0.unwrap_or_else(|| events.first().map_or(0, |e| e.t as i64 - 1));
            m.param("t0", t0);
            let it = TimeFrames::new(&events, a.dt_us, t0, geom)?;
            let excluded = it.excluded();
            let mut n = 0;
            for f in it {
                emit(f)?;
                n += 1;
            }
            (n, excluded, 0, Some(1e6 / a.dt_us as f64))
        }
        AggMode::Count => {
            let it = CountFrames::new(&events, a.n_evt, geom)?;
            let unconsumed = it.unconsumed();
            let mut n = 0;
            for f in it {
                emit(f)?;
                n += 1;
            }
            let rate = (span_s > 0.0).then(|| events.len() as f64 / span_s / a.n_evt as f64);
            (n, 0, unconsumed, rate)
        }
    };
    write_bytes(&a.output, &dump)?;
    let summary = format!("{frames} frames from {} events{}", events.len(), rate.map_or(String::new(), |r| format!(", {r:.1} frames/s")));
    Ok(Outcome {
        results: json!({
            "frames": frames,
            "events": events.len(),
            "excluded": excluded,
            "unconsumed": unconsumed,
            "frame_rate_hz": rate,
            "stream_duration_s": span_s,
            "frame_shape": shape,
        }),
        counters: json!({ "events": events.len(), "frames": frames }),
        summary,
    })
}

fn read_ground_truth(path: &Path) -> Result<Vec<(usize, f64, f64)>, CliError> {
    let text = String::from_utf8(read_bytes(path)?).map_err(|e| CliError::new("parse", format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (i == 0 && line.starts_with("frame")) {
            continue;
        }
        let bad = || CliError::new("parse", format!("{}:{}: expected frame_idx,x,y", path.display(), i + 1));
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 3 {
            return Err(bad());
        }
        rows.push((f[0].parse().map_err(|_| bad())?, f[1].parse().map_err(|_| bad())?, f[2].parse().map_err(|_| bad())?));
    }
    Ok(rows)
}

fn cmd_infer(a: &InferArgs, m: &mut Manifest) -> Result<Outcome, CliError> {
    m.input("model", a.model.display());
    m.input("frames", a.frames.display());
    let mode = match a.mode {
        ModeArg::Fixed => Mode::Fixed,
        ModeArg::Reference => Mode::Reference,
    };
    let acts = match a.activations {
        ActsArg::Deployed => ReferenceActivations::Deployed,
        ActsArg::Original => ReferenceActivations::Original,
    };
    m.param("mode", mode);
    m.param("activations", acts);
    m.param("sensor_coords", a.sensor_coords);
    m.param("compare", a.compare);
    if let Some(g) = &a.ground_truth {
        m.input("ground_truth", g.display());
    }
    let model = load_model(&a.model)?;
    let frames = load_frames(&a.frames)?;
    let w = ModelWeights { fixed: model.fixed.as_ref(), float: model.float.as_ref() };
    let run = forward_sequence(&frames, &model.config, w, mode, acts, false)?;
    let scale = if a.sensor_coords { model.config.sensor_scale } else { 1.0 };
    let shown = |p: &[Prediction]| -> Vec<Value> { p.iter().enumerate().map(|(i, p)| json!({ "frame": i, "x": p.x * scale, "y": p.y * scale })).collect() };
    let mut results = json!({
        "mode": mode,
        "frames": frames.len(),
        "coordinates": if a.sensor_coords { "sensor" } else { "downsampled" },
        "predictions": shown(&run.predictions),
    });
    let mut summary = format!("{} predictions ({:?} mode)", run.predictions.len(), mode);
    if let Some(g) = &a.ground_truth {
        let rows = read_ground_truth(g)?;
        let errs: Vec<f64> = rows.iter().filter_map(|&(i, x, y)| run.predictions.get(i).map(|p| ((p.x - x).powi(2) + (p.y - y).powi(2)).sqrt())).collect();
        let mean = (!errs.is_empty()).then(|| errs.iter().sum::<f64>() / errs.len() as f64);
        results["ground_truth"] = json!({ "rows": rows.len(), "matched": errs.len(), "mean_pixel_error": mean });
        if let Some(e) = mean {
            summary += &format!(", mean pixel error {e:.3}");
        }
    }
    if a.compare {
        let other = if mode == Mode::Fixed { Mode::Reference } else { Mode::Fixed };
        let alt = forward_sequence(&frames, &model.config, w, other, acts, false)?;
        let deltas: Vec<f64> = run.predictions.iter().zip(&alt.predictions).map(|(p, q)| ((p.x - q.x).powi(2) + (p.y - q.y).powi(2)).sqrt() * scale).collect();
        let max = deltas.iter().cloned().fold(0.0, f64::max);
        let mean = if deltas.is_empty() { 0.0 } else { deltas.iter().sum::<f64>() / deltas.len() as f64 };
        results["comparison"] = json!({ "other_mode": other, "predictions": shown(&alt.predictions), "deltas": deltas, "max_delta": max, "mean_delta": mean });
        summary += &format!(", max {other:?} delta {max:.4} px");
    }
    Ok(Outcome { results, counters: to_value(&run.counters), summary })
}

fn parse_sparsity(s: &str) -> Result<Option<f64>, CliError> {
    if s == "measured" {
        return Ok(None);
    }
    let v = s
        .strip_prefix("inject=")
        .and_then(|v| v.parse::<f64>().ok())
        .ok_or_else(|| CliError::new("invalid_argument", format!("sparsity '{s}' is not 'measured' or 'inject=S'")))?;
    if !(0.0..=1.0).contains(&v) {
        return Err(CliError::new("invalid_argument", format!("injected sparsity {v} outside [0, 1]")));
    }
    Ok(Some(v))
}

fn load_coefficients(path: Option<&Path>, m: &mut Manifest) -> Result<EnergyCoefficients, CliError> {
    match path {
        Some(p) => {
            m.input("coefficients", p.display());
            Ok(EnergyCoefficients::load(p)?)
        }
        None => {
            m.input("coefficients", "shipped");
            Ok(EnergyCoefficients::shipped())
        }
    }
}

fn sim_summary(r: &SimReport) -> String {
    format!(
        "{} cycles, {:.4} ms, {:.0} fps ({:.0} pipelined), {:.2} uJ/frame, utilization {:.3}",
        r.total_cycles, r.latency_ms, r.fps, r.fps_pipelined, r.energy_per_frame_uj, r.utilization
    )
}

fn cmd_simulate(a: &SimulateArgs, m: &mut Manifest) -> Result<Outcome, CliError> {
    m.input("model", a.model.display());
    if let Some(f) = &a.frames {
        m.input("frames", f.display());
    }
    if let Some(h) = &a.hw {
        m.input("hw", h.display());
    }
    let model = load_model(&a.model)?;
    let coeffs = load_coefficients(a.coefficients.as_deref(), m)?;
    let mut hw = load_hw(a.hw.as_deref())?;
    if let Some(c) = a.clock_hz {
        if !c.is_finite() || c <= 0.0 {
            return Err(CliError::new("invalid_argument", "clock must be positive"));
        }
        hw.pe.clock_hz = c;
    }
    m.param("clock_hz", hw.pe.clock_hz);
    m.param("include_leakage", a.include_leakage);
    let opts = SimOptions { include_leakage: a.include_leakage };
    let schedule = build_schedule(&model.config, &hw)?;
    let counters = topology_counters(&model.config)?;

    if !a.sweep.is_empty() {
        m.param("sweep", &a.sweep);
        for &s in &a.sweep {
            parse_sparsity(&format!("inject={s}"))?;
        }
        let runs: Vec<Result<SimReport, CliError>> = std::thread::scope(|sc| {
            let handles: Vec<_> = a
                .sweep
                .iter()
                .map(|&s| {
                    let (schedule, hw, coeffs) = (schedule.clone(), &hw, &coeffs);
                    sc.spawn(move || simulate_schedule(schedule, hw, &SparsitySource::Injected(s), coeffs, opts).map_err(CliError::from))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("simulation thread panicked")).collect()
        });
        let runs = runs.into_iter().collect::<Result<Vec<_>, _>>()?;
        let summary = runs.iter().zip(&a.sweep).map(|(r, s)| format!("s={s}: {:.2} uJ", r.energy_per_frame_uj)).collect::<Vec<_>>().join(", ");
        let rows: Vec<Value> = runs.iter().map(to_value).collect();
        return Ok(Outcome { results: json!({ "sweep": rows }), counters, summary });
    }

    let sparsity = match &a.sparsity {
        Some(s) => parse_sparsity(s)?,
        None if a.frames.is_some() => None,
        None => Some(0.4),
    };
    let source = match sparsity {
        Some(s) => SparsitySource::Injected(s),
        None => {
            let path = a.frames.as_ref().ok_or_else(|| CliError::new("invalid_argument", "measured sparsity needs a frames file"))?;
            let fixed = model
                .fixed
                .as_ref()
                .ok_or_else(|| CliError::new("missing_weights", "measured sparsity needs quantized weights; run `janeeye quantize` first"))?;
            let frames = load_frames(path)?;
            if frames.is_empty() {
                return Err(CliError::new("invalid_argument", "frames file holds no frames"));
            }
            measure_sparsity(&model.config, fixed, &frames)?
        }
    };
    m.param("sparsity", source.label());
    let trace = a.fsm_trace.then(|| fsm_trace(&schedule));
    let rep = simulate_schedule(schedule, &hw, &source, &coeffs, opts)?;
    let summary = sim_summary(&rep);
    let mut results = to_value(&rep);
    if let Some(t) = trace {
        results["fsm_trace"] = to_value(&t);
    }
    Ok(Outcome { results, counters, summary })
}

fn cmd_quantize(a: &QuantizeArgs, m: &mut Manifest) -> Result<Outcome, CliError> {
    m.input("model", a.model.display());
    m.output("model", a.output.display());
    m.param("fixed_only", a.fixed_only);
    let model = load_model(&a.model)?;
    let float = model.float.as_ref().ok_or_else(|| CliError::new("missing_weights", "model file has no float weights to quantize"))?;
    let (fixed, mut rep) = quantize_model(float, &model.config)?;
    if let Some(p) = &a.calibration_frames {
        m.input("calibration_frames", p.display());
        let frames: Vec<Tensor<f64>> = load_frames(p)?.iter().map(frame_to_real).collect();
        rep.ranges = Some(calibrate_ranges(&model.config, float, &frames)?);
    }
    let out = ModelFile { config: model.config.clone(), fixed: Some(fixed), float: (!a.fixed_only).then(|| float.clone()) };
    write_model_file(&a.output, &out)?;
    let summary = format!(
        "{} weights, max error {:.2e}, {} saturated, footprint ratios {:.2} weights / {:.2} activations",
        rep.total_weights, rep.max_abs_weight_error, rep.saturated, rep.footprint.weight_ratio, rep.footprint.activation_ratio
    );
    Ok(Outcome { results: to_value(&rep), counters: topology_counters(&model.config)?, summary })
}

fn read_config(path: &Path) -> Result<ModelConfig, CliError> {
    let c: ModelConfig = serde_json::from_slice(&read_bytes(path)?).map_err(|e| CliError::new("config", format!("{}: {e}", path.display())))?;
    c.validate()?;
    Ok(c)
}

fn cmd_init(a: &InitArgs, m: &mut Manifest) -> Result<Outcome, CliError> {
    m.output("model", a.output.display());
    m.seed = Some(a.seed);
    m.param("zero_weights", a.zero_weights);
    m.param(
        "weights",
        match a.weights {
            WeightsArg::Float => "float",
            WeightsArg::Fixed => "fixed",
            WeightsArg::Both => "both",
        },
    );
    let config = match &a.config {
        Some(p) => {
            m.input("config", p.display());
            read_config(p)?
        }
        None => ModelConfig::default(),
    };
    let float = if a.zero_weights { FloatWeights::centred_zeros(&config)? } else { FloatWeights::random(&config, a.seed)? };
    let fixed: FixedWeights = quantize_model(&float, &config)?.0;
    let file = match a.weights {
        WeightsArg::Float => ModelFile { config: config.clone(), fixed: None, float: Some(float) },
        WeightsArg::Fixed => ModelFile { config: config.clone(), fixed: Some(fixed), float: None },
        WeightsArg::Both => ModelFile { config: config.clone(), fixed: Some(fixed), float: Some(float) },
    };
    write_model_file(&a.output, &file)?;
    let counters = topology_counters(&config)?;
    let summary = format!("wrote {} ({} parameters)", a.output.display(), counters["params"]);
    Ok(Outcome { results: json!({ "layers": config.layers.len(), "has_fixed": file.fixed.is_some(), "has_float": file.float.is_some() }), counters, summary })
}

fn cmd_derive(a: &DeriveArgs, m: &mut Manifest) -> Result<Outcome, CliError> {
    let config = match &a.model {
        Some(p) => {
            m.input("model", p.display());
            load_model(p)?.config
        }
        None => ModelConfig::default(),
    };
    if let Some(o) = &a.output {
        m.output("config", o.display());
        let text = serde_json::to_string_pretty(&config).map_err(|e| CliError::new("config", e.to_string()))?;
        write_bytes(o, text.as_bytes())?;
    }
    let per_layer = CounterReport::for_config(&config)?;
    let ops: Vec<Value> =
        config.ops()?.iter().map(|o| json!({ "name": o.name, "input": o.input, "output": o.output, "macs": o.macs(), "weights": o.weight_count() })).collect();
    let counters = topology_counters(&config)?;
    let summary = format!("{} params, {} MACs/frame", counters["params"], counters["macs_per_frame"]);
    Ok(Outcome { results: json!({ "config": config, "layers": per_layer.layers, "ops": ops }), counters, summary })
}

fn cmd_calibrate(a: &CalibrateArgs, m: &mut Manifest) -> Result<Outcome, CliError> {
    let config = match &a.model {
        Some(p) => {
            m.input("model", p.display());
            load_model(p)?.config
        }
        None => ModelConfig::default(),
    };
    if let Some(h) = &a.hw {
        m.input("hw", h.display());
    }
    let hw = load_hw(a.hw.as_deref())?;
    let targets = CalibrationTargets { energy_per_frame_j: a.energy_uj * 1e-6, sparsity: a.sparsity, reduction: a.reduction, leakage_mw: a.leakage_mw };
    m.param("targets", &targets);
    let cal = calibrate_default(&config, &hw, &targets)?;
    if let Some(o) = &a.output {
        m.output("coefficients", o.display());
        write_bytes(o, cal.coefficients.to_toml().as_bytes())?;
    }
    let summary = format!("mac {:.4} pJ, dense {:.2} uJ/frame", cal.mac_pj, cal.energy_dense_j * 1e6);
    Ok(Outcome { results: to_value(&cal), counters: topology_counters(&config)?, summary })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let name = match &cli.command {
        Command::Aggregate(_) => "aggregate",
        Command::Infer(_) => "infer",
        Command::Simulate(_) => "simulate",
        Command::Quantize(_) => "quantize",
        Command::InitModel(_) => "init-model",
        Command::DeriveConfig(_) => "derive-config",
        Command::CalibrateEnergy(_) => "calibrate-energy",
    };
    let mut manifest = Manifest::new(name);
    let m = &mut manifest;
    let outcome = match &cli.command {
        Command::Aggregate(a) => cmd_aggregate(a, m),
        Command::Infer(a) => cmd_infer(a, m),
        Command::Simulate(a) => cmd_simulate(a, m),
        Command::Quantize(a) => cmd_quantize(a, m),
        Command::InitModel(a) => cmd_init(a, m),
        Command::DeriveConfig(a) => cmd_derive(a, m),
        Command::CalibrateEnergy(a) => cmd_calibrate(a, m),
    };
    let ok = outcome.is_ok();
    let (results, counters, error) = match outcome {
        Ok(o) => {
            if !cli.quiet {
                eprintln!("{name}: {}", o.summary);
            }
            (o.results, o.counters, None)
        }
        Err(e) => {
            eprintln!("error: {e}");
            (Value::Null, Value::Null, Some(ErrorInfo { code: e.code, message: e.message }))
        }
    };
    let report = Report { schema_version: REPORT_SCHEMA_VERSION, command: name.into(), manifest, results, counters, error };
    let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    let written = match &cli.report {
        Some(p) => std::fs::write(p, text).map_err(|e| eprintln!("error: {}: {e}", p.display())).is_ok(),
        None => {
            print!("{text}");
            true
        }
    };
    if ok && written {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
