use std::collections::BTreeMap;
use std::path::Path;

use convbf::pipeline::metrics::metrics;
use convbf::pipeline::{run, verify_equivalence, EquivalenceStats, Method, PipelineConfig, RtfSource, RunReport};
use convbf::scene::{frames_for_ms, synthesize_scene};
use convbf::tfspace::{analyze, synthesize};
use convbf::{CVector, Spectrogram, C64};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::io::{read_mask, read_wav, write_wav_mono};
use crate::settings::{
    load_file, resolve, scene_grid, BenchArgs, BenchSettings, EnhanceArgs, EquivArgs, Resolved, SceneSettings, SourceArgs,
    AUDIO_GRID,
};

/// Outcome of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success,
    /// The equivalence check ran but exceeded its tolerance.
    Fail,
}

impl Status {
    pub fn exit_code(self) -> u8 {
        match self {
            Status::Success => 0,
            Status::Fail => 1,
        }
    }
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> CliResult<()> {
    let Some(path) = path else { return Ok(()) };
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Output(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::Output(format!("{}: {e}", path.display())))
}

/// Steering source for recorded input: a mask file or noise-only head/tail
/// marks. Methods without a beamformer get a unit placeholder.
fn recorded_source(args: &SourceArgs, spec: &Spectrogram, cfg: &PipelineConfig) -> CliResult<RtfSource> {
    let marks = args.noise_head_ms.is_some() || args.noise_tail_ms.is_some();
    match (&args.mask, marks) {
        (Some(_), true) => Err(CliError::Config("give either --mask or noise marks, not both".into())),
        (Some(path), false) => {
            let mask = read_mask(path)?;
            if mask.dim() != (spec.frames(), spec.num_bins()) {
                return Err(CliError::Config(format!(
                    "mask is {:?} but the input has {} frames and {} bins",
                    mask.dim(),
                    spec.frames(),
                    spec.num_bins()
                )));
            }
            Ok(RtfSource::Mask(mask))
        }
        (None, true) => {
            let t = spec.frames();
            let ms = |v: Option<f64>| -> CliResult<usize> {
                let v = v.unwrap_or(0.0);
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(CliError::Config("noise marks must be non-negative".into()));
                }
                Ok(frames_for_ms(v, spec.sample_rate, spec.hop))
            };
            let (head, tail) = (ms(args.noise_head_ms)?, ms(args.noise_tail_ms)?);
            if head + tail > t {
                return Err(CliError::Config("noise marks cover more than the whole input".into()));
            }
            Ok(RtfSource::NoiseFrames((0..head).chain(t - tail..t).collect()))
        }
        (None, false) if cfg.method.needs_steering() => {
            Err(CliError::Config(format!("method {} needs --mask or --noise-head-ms/--noise-tail-ms", cfg.method)))
        }
        (None, false) => {
            let mut v = CVector::zeros(spec.channels());
            v[cfg.reference_channel.min(spec.channels() - 1)] = C64::new(1.0, 0.0);
            Ok(RtfSource::Oracle(vec![v; spec.num_bins()]))
        }
    }
}

#[derive(Serialize)]
struct InputInfo<'a> {
    path: &'a Path,
    channels: usize,
    samples: usize,
    sample_rate: u32,
    frames: usize,
    bins: usize,
}

#[derive(Serialize)]
struct ReportSummary<'a> {
    failed_bins: &'a [(usize, String)],
    metrics: &'a BTreeMap<String, f64>,
    /// Objective after the last update, per bin.
    final_loglik: Vec<Option<f64>>,
}

impl<'a> ReportSummary<'a> {
    fn new(report: &'a RunReport) -> Self {
        ReportSummary {
            failed_bins: &report.failed_bins,
            metrics: &report.metrics,
            final_loglik: report.per_iteration_loglik.iter().map(|l| l.last().copied()).collect(),
        }
    }
}

#[derive(Serialize)]
struct EnhanceJson<'a> {
    command: &'static str,
    config: &'a Resolved,
    input: InputInfo<'a>,
    output: &'a Path,
    report: ReportSummary<'a>,
}

pub fn enhance(args: &EnhanceArgs) -> CliResult<Status> {
    let file = load_file(&args.pipeline)?;
    let resolved = resolve(&args.pipeline, &file, PipelineConfig::default(), AUDIO_GRID)?;
    let cfg = &resolved.pipeline;
    let wave = read_wav(&args.input)?;
    cfg.validate(wave.sample_rate, wave.channels())?;
    let spec = analyze(&wave, resolved.stft.frame_len, resolved.stft.hop)?;
    let source = recorded_source(&args.source, &spec, cfg)?;
    let report = run(&spec, cfg, &source)?;
    let out = synthesize(&report.enhanced)?;
    let samples: Vec<f64> = out.samples.column(0).iter().take(wave.num_samples()).copied().collect();
    write_wav_mono(&args.output, &samples, wave.sample_rate)?;
    println!(
        "enhanced {} -> {} ({}, {} failed bins)",
        args.input.display(),
        args.output.display(),
        cfg.method,
        report.failed_bins.len()
    );
    let json = EnhanceJson {
        command: "enhance",
        config: &resolved,
        input: InputInfo {
            path: &args.input,
            channels: wave.channels(),
            samples: wave.num_samples(),
            sample_rate: wave.sample_rate,
            frames: spec.frames(),
            bins: spec.num_bins(),
        },
        output: &args.output,
        report: ReportSummary::new(&report),
    };
    write_json(args.pipeline.json_out.as_deref(), &json)?;
    Ok(Status::Success)
}

#[derive(Serialize)]
struct EquivJson<'a> {
    command: &'static str,
    config: &'a Resolved,
    scene: Option<&'a SceneSettings>,
    input: Option<&'a Path>,
    stats: &'a EquivalenceStats,
}

/// The check defaults to exact solves: diagonal loading regularizes the two
/// paths' matrices differently and so is not part of the identity.
pub fn equiv_check(args: &EquivArgs) -> CliResult<Status> {
    let file = load_file(&args.pipeline)?;
    let base = PipelineConfig { loading: 0.0, ..PipelineConfig::default() };
    let (resolved, scene, spec, source) = match &args.input {
        Some(path) => {
            let resolved = resolve(&args.pipeline, &file, base, AUDIO_GRID)?;
            let wave = read_wav(path)?;
            let spec = analyze(&wave, resolved.stft.frame_len, resolved.stft.hop)?;
            let cfg = resolved.pipeline.clone().with_method(Method::Wpd);
            cfg.validate(wave.sample_rate, wave.channels())?;
            let source = recorded_source(&args.source, &spec, &cfg)?;
            (resolved, None, spec, source)
        }
        None => {
            let resolved = resolve(&args.pipeline, &file, base, scene_grid())?;
            let scene = SceneSettings::resolve(&args.scene, &file, resolved.pipeline.delay, resolved.stft, 2)?;
            let truth = synthesize_scene(&scene.spec(scene.seed))?;
            let source = RtfSource::Oracle(truth.rtf.clone());
            (resolved, Some(scene), truth.observation, source)
        }
    };
    if spec.channels() < 2 {
        return Err(CliError::Config("need ≥2 channels".into()));
    }
    let stats = verify_equivalence(&spec, &resolved.pipeline, &source, args.tol)?;
    println!(
        "max_rel_diff={:.3e} tol={:e} {}",
        stats.max_rel_diff,
        stats.tolerance,
        if stats.passed { "PASS" } else { "FAIL" }
    );
    let json = EquivJson {
        command: "equiv-check",
        config: &resolved,
        scene: scene.as_ref(),
        input: args.input.as_deref(),
        stats: &stats,
    };
    write_json(args.pipeline.json_out.as_deref(), &json)?;
    Ok(if stats.passed { Status::Success } else { Status::Fail })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Mean and sample standard deviation.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 { values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        MeanStd { mean, std: var.sqrt() }
    }
}

const TABLE_METRICS: [&str; 5] = ["snr_db", "input_snr_db", "snr_gain_db", "late_reverb_ratio_db", "noise_ratio_db"];

#[derive(Serialize)]
struct MethodRow {
    metrics: BTreeMap<&'static str, MeanStd>,
    failed_bins: usize,
}

#[derive(Serialize)]
struct SweepPoint {
    iterations: usize,
    snr_db: MeanStd,
    late_reverb_ratio_db: MeanStd,
    noise_ratio_db: MeanStd,
}

#[derive(Serialize)]
struct BenchJson<'a> {
    command: &'static str,
    config: &'a Resolved,
    scene: &'a SceneSettings,
    bench: &'a BenchSettings,
    seeds: Vec<u64>,
    table: BTreeMap<String, MethodRow>,
    iteration_sweep: BTreeMap<String, Vec<SweepPoint>>,
}

struct Sample {
    metrics: BTreeMap<String, f64>,
    failed_bins: usize,
}

fn evaluate(truth: &convbf::SceneTruth, cfg: &PipelineConfig, source: &RtfSource) -> CliResult<Sample> {
    let report = run(&truth.observation, cfg, source)?;
    let mut m = metrics(truth, &report)?;
    if let Some(ll) = report.metrics.get("mean_final_loglik") {
        m.insert("mean_final_loglik".into(), *ll);
    }
    Ok(Sample { metrics: m, failed_bins: report.failed_bins.len() })
}

fn collect(samples: &[Sample], key: &str) -> MeanStd {
    MeanStd::of(&samples.iter().map(|s| s.metrics[key]).collect::<Vec<_>>())
}

pub fn bench(args: &BenchArgs) -> CliResult<Status> {
    let file = load_file(&args.pipeline)?;
    let resolved = resolve(&args.pipeline, &file, PipelineConfig::default(), scene_grid())?;
    let scene = SceneSettings::resolve(&args.scene, &file, resolved.pipeline.delay, resolved.stft, 4)?;
    let settings = BenchSettings::resolve(args, &file)?;
    let methods: Vec<Method> = settings.methods.iter().map(|m| m.parse()).collect::<Result<_, _>>()?;
    let seeds: Vec<u64> = (0..settings.seeds as u64).map(|i| scene.seed + i).collect();
    let joint: Method = "wpe+wmpdr".parse()?;
    let separate: Method = "wpe+wmpdr:separate".parse()?;

    let mut per_method: Vec<Vec<Sample>> = methods.iter().map(|_| Vec::new()).collect();
    let mut sweep: Vec<[Vec<Sample>; 2]> = (0..settings.max_iters).map(|_| [Vec::new(), Vec::new()]).collect();
    for &seed in &seeds {
        let truth = synthesize_scene(&scene.spec(seed))?;
        let source = match settings.rtf.as_str() {
            "oracle" => RtfSource::Oracle(truth.rtf.clone()),
            _ => RtfSource::Mask(truth.oracle_mask.clone()),
        };
        resolved.pipeline.validate(truth.observation.sample_rate, scene.channels)?;
        for (i, &m) in methods.iter().enumerate() {
            per_method[i].push(evaluate(&truth, &resolved.pipeline.clone().with_method(m), &source)?);
        }
        for (i, point) in sweep.iter_mut().enumerate() {
            for (slot, method) in point.iter_mut().zip([joint, separate]) {
                let cfg = resolved.pipeline.clone().with_method(method).with_iterations(i + 1);
                slot.push(evaluate(&truth, &cfg, &source)?);
            }
        }
    }

    let mut table = BTreeMap::new();
    println!("{:<22} {:>16} {:>16} {:>16}", "method", "snr_db", "late_db", "noise_db");
    for (method, samples) in methods.iter().zip(&per_method) {
        let metrics: BTreeMap<&'static str, MeanStd> = TABLE_METRICS.iter().map(|&k| (k, collect(samples, k))).collect();
        let fmt = |k: &str| format!("{:.2}±{:.2}", metrics[k].mean, metrics[k].std);
        println!("{:<22} {:>16} {:>16} {:>16}", method.to_string(), fmt("snr_db"), fmt("late_reverb_ratio_db"), fmt("noise_ratio_db"));
        let failed_bins = samples.iter().map(|s| s.failed_bins).sum();
        table.insert(method.to_string(), MethodRow { metrics, failed_bins });
    }

    let mut iteration_sweep: BTreeMap<String, Vec<SweepPoint>> = BTreeMap::new();
    let mut csv = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::Output(e.to_string());
    csv.write_record(["method", "iterations", "seed", "snr_db", "late_reverb_ratio_db", "noise_ratio_db", "mean_final_loglik"])
        .map_err(csv_err)?;
    for (i, point) in sweep.iter().enumerate() {
        for (samples, method) in point.iter().zip([joint, separate]) {
            iteration_sweep.entry(method.to_string()).or_default().push(SweepPoint {
                iterations: i + 1,
                snr_db: collect(samples, "snr_db"),
                late_reverb_ratio_db: collect(samples, "late_reverb_ratio_db"),
                noise_ratio_db: collect(samples, "noise_ratio_db"),
            });
            for (seed, s) in seeds.iter().zip(samples) {
                let value = |k: &str| s.metrics.get(k).map_or_else(String::new, |v| v.to_string());
                csv.write_record([
                    method.to_string(),
                    (i + 1).to_string(),
                    seed.to_string(),
                    value("snr_db"),
                    value("late_reverb_ratio_db"),
                    value("noise_ratio_db"),
                    value("mean_final_loglik"),
                ])
                .map_err(csv_err)?;
            }
        }
    }
    for (name, points) in &iteration_sweep {
        let curve: Vec<String> = points.iter().map(|p| format!("{:.2}", p.snr_db.mean)).collect();
        println!("{name} snr_db by iteration: {}", curve.join(" "));
    }
    if let Some(path) = &args.csv_out {
        let bytes = csv.into_inner().map_err(|e| CliError::Output(e.to_string()))?;
        std::fs::write(path, bytes).map_err(|e| CliError::Output(format!("{}: {e}", path.display())))?;
    }
    let json = BenchJson {
        command: "bench",
        config: &resolved,
        scene: &scene,
        bench: &settings,
        seeds,
        table,
        iteration_sweep,
    };
    write_json(args.pipeline.json_out.as_deref(), &json)?;
    Ok(Status::Success)
}
