//! Command-line flags, the optional key=value config file, and their
//! resolution into one configuration. Flags override the file, the file
//! overrides built-in defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use convbf::pipeline::{format_lw_bands, parse_lw_bands, LambdaInit, Method, PipelineConfig};
use convbf::SceneSpec;
use ini::Ini;
use serde::Serialize;

use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "convbf", version, about = "Joint dereverberation and denoising with convolutional beamformers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Enhance a multichannel WAV file into a mono WAV file.
    Enhance(EnhanceArgs),
    /// Check that the unified and factorized beamformers agree.
    EquivCheck(EquivArgs),
    /// Compare methods on seeded synthetic scenes.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct PipelineArgs {
    /// Key=value config file with [pipeline], [stft], [scene] and [bench] sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// obs, wpd, wpe, mpdr, mvdr, wmpdr, wpe+<bf> or wpe+<bf>:separate.
    #[arg(long)]
    pub method: Option<String>,
    /// Prediction delay in frames.
    #[arg(long = "b")]
    pub b: Option<usize>,
    /// Filter lengths as `hz:taps,...` (upper band edges) or a single count.
    #[arg(long)]
    pub lw: Option<String>,
    #[arg(long)]
    pub iters: Option<usize>,
    /// WPE iterations of the separate scheme.
    #[arg(long)]
    pub inner_iters: Option<usize>,
    #[arg(long)]
    pub loading: Option<f64>,
    #[arg(long)]
    pub lambda_floor: Option<f64>,
    /// channel_mean or reference.
    #[arg(long)]
    pub lambda_init: Option<String>,
    #[arg(long)]
    pub ref_channel: Option<usize>,
    #[arg(long)]
    pub frame_len: Option<usize>,
    #[arg(long)]
    pub hop: Option<usize>,
    /// Write a JSON report here.
    #[arg(long)]
    pub json_out: Option<PathBuf>,
}

/// Steering-vector sources for recorded input.
#[derive(Debug, Clone, Default, Args)]
pub struct SourceArgs {
    /// Speech-presence mask file.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Leading noise-only duration in milliseconds.
    #[arg(long)]
    pub noise_head_ms: Option<f64>,
    /// Trailing noise-only duration in milliseconds.
    #[arg(long)]
    pub noise_tail_ms: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SceneArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub channels: Option<usize>,
    #[arg(long)]
    pub frames: Option<usize>,
    /// Transfer-function length in frames.
    #[arg(long)]
    pub atf_len: Option<usize>,
    #[arg(long)]
    pub snr_db: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct EnhanceArgs {
    pub input: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[command(flatten)]
    pub source: SourceArgs,
}

#[derive(Debug, Clone, Args)]
pub struct EquivArgs {
    /// Recorded input; a synthetic scene is generated when absent.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = convbf::pipeline::EQUIVALENCE_TOLERANCE)]
    pub tol: f64,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub scene: SceneArgs,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[command(flatten)]
    pub scene: SceneArgs,
    /// Number of scenes; seeds run from --seed upwards.
    #[arg(long)]
    pub seeds: Option<usize>,
    /// Comma-separated methods for the table.
    #[arg(long)]
    pub methods: Option<String>,
    /// Largest iteration count of the joint/separate sweep.
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Steering source: mask (oracle mask) or oracle (true RTF).
    #[arg(long)]
    pub rtf: Option<String>,
    /// Per-iteration sweep as CSV.
    #[arg(long)]
    pub csv_out: Option<PathBuf>,
}

/// Flattened `section.key -> value` view of a config file.
#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

const KNOWN_KEYS: &[&str] = &[
    "pipeline.method",
    "pipeline.b",
    "pipeline.lw",
    "pipeline.iters",
    "pipeline.inner_iters",
    "pipeline.loading",
    "pipeline.lambda_floor",
    "pipeline.lambda_init",
    "pipeline.ref_channel",
    "stft.frame_len",
    "stft.hop",
    "scene.seed",
    "scene.channels",
    "scene.frames",
    "scene.atf_len",
    "scene.snr_db",
    "bench.seeds",
    "bench.methods",
    "bench.max_iters",
    "bench.rtf",
];

impl ConfigFile {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| CliError::Config(format!("config file: {e}")))?;
        let mut values = BTreeMap::new();
        for (section, props) in ini.iter() {
            let section = section.unwrap_or("pipeline");
            for (key, value) in props.iter() {
                let full = format!("{section}.{key}");
                if !KNOWN_KEYS.contains(&full.as_str()) {
                    return Err(CliError::Config(format!("unknown config key '{full}'")));
                }
                values.insert(full, value.trim().to_string());
            }
        }
        Ok(ConfigFile { values })
    }

    fn get<T: FromStr>(&self, key: &str) -> CliResult<Option<T>> {
        self.values
            .get(key)
            .map(|v| v.parse().map_err(|_| CliError::Config(format!("bad value '{v}' for '{key}'"))))
            .transpose()
    }
}

fn pick<T: FromStr>(flag: Option<T>, file: &ConfigFile, key: &str, default: T) -> CliResult<T> {
    Ok(match flag {
        Some(v) => v,
        None => file.get(key)?.unwrap_or(default),
    })
}

fn parse_with<T>(text: &str, f: impl FnOnce(&str) -> convbf::Result<T>) -> CliResult<T> {
    f(text).map_err(|e| CliError::Config(e.to_string()))
}

/// STFT grid. Recorded audio uses 32 ms frames with 75% overlap; synthetic
/// scenes default to the scene generator's own coarse grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StftGrid {
    pub frame_len: usize,
    pub hop: usize,
}

pub const AUDIO_GRID: StftGrid = StftGrid { frame_len: 512, hop: 128 };

/// Everything a command runs with, after flags, file and defaults.
#[derive(Debug, Clone, Serialize)]
pub struct Resolved {
    pub pipeline: PipelineConfig,
    pub stft: StftGrid,
    /// `lw_bands` in flag syntax.
    pub lw: String,
}

pub fn load_file(args: &PipelineArgs) -> CliResult<ConfigFile> {
    args.config.as_deref().map(ConfigFile::load).transpose().map(Option::unwrap_or_default)
}

pub fn resolve(args: &PipelineArgs, file: &ConfigFile, base: PipelineConfig, grid: StftGrid) -> CliResult<Resolved> {
    let mut cfg = base;
    let method: String = pick(args.method.clone(), file, "pipeline.method", cfg.method.to_string())?;
    cfg.method = parse_with(&method, str::parse::<Method>)?;
    cfg.delay = pick(args.b, file, "pipeline.b", cfg.delay)?;
    let lw: String = pick(args.lw.clone(), file, "pipeline.lw", format_lw_bands(&cfg.lw_bands))?;
    cfg.lw_bands = parse_with(&lw, parse_lw_bands)?;
    cfg.iterations = pick(args.iters, file, "pipeline.iters", cfg.iterations)?;
    cfg.separate_inner_iterations = match args.inner_iters {
        Some(v) => Some(v),
        None => file.get("pipeline.inner_iters")?.or(cfg.separate_inner_iterations),
    };
    cfg.loading = pick(args.loading, file, "pipeline.loading", cfg.loading)?;
    cfg.lambda_floor = pick(args.lambda_floor, file, "pipeline.lambda_floor", cfg.lambda_floor)?;
    let init: Option<String> = match &args.lambda_init {
        Some(v) => Some(v.clone()),
        None => file.get("pipeline.lambda_init")?,
    };
    if let Some(init) = init {
        cfg.lambda_init = parse_with(&init, str::parse::<LambdaInit>)?;
    }
    cfg.reference_channel = pick(args.ref_channel, file, "pipeline.ref_channel", cfg.reference_channel)?;
    let stft = StftGrid {
        frame_len: pick(args.frame_len, file, "stft.frame_len", grid.frame_len)?,
        hop: pick(args.hop, file, "stft.hop", grid.hop)?,
    };
    Ok(Resolved { lw: format_lw_bands(&cfg.lw_bands), pipeline: cfg, stft })
}

/// Scene parameters for synthetic runs. The early/late split follows the
/// prediction delay.
#[derive(Debug, Clone, Serialize)]
pub struct SceneSettings {
    pub seed: u64,
    pub channels: usize,
    pub frames: usize,
    pub atf_len: usize,
    pub snr_db: f64,
    pub delay: usize,
    pub frame_len: usize,
    pub hop: usize,
}

impl SceneSettings {
    pub fn resolve(args: &SceneArgs, file: &ConfigFile, delay: usize, grid: StftGrid, channels: usize) -> CliResult<Self> {
        Ok(SceneSettings {
            seed: pick(args.seed, file, "scene.seed", 0)?,
            channels: pick(args.channels, file, "scene.channels", channels)?,
            frames: pick(args.frames, file, "scene.frames", 400)?,
            atf_len: pick(args.atf_len, file, "scene.atf_len", 8.max(delay))?,
            snr_db: pick(args.snr_db, file, "scene.snr_db", 20.0)?,
            delay,
            frame_len: grid.frame_len,
            hop: grid.hop,
        })
    }

    pub fn spec(&self, seed: u64) -> SceneSpec {
        SceneSpec::new(self.channels, self.atf_len, self.delay, self.frames, self.snr_db, seed).with_grid(self.frame_len, self.hop)
    }
}

/// Grid of the scene generator's defaults.
pub fn scene_grid() -> StftGrid {
    let s = SceneSpec::new(2, 1, 1, 1, 0.0, 0);
    StftGrid { frame_len: s.frame_len, hop: s.hop }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchSettings {
    pub seeds: usize,
    pub methods: Vec<String>,
    pub max_iters: usize,
    pub rtf: String,
}

pub const BENCH_METHODS: &str = "obs,mpdr,mvdr,wmpdr,wpe,wpe+mpdr,wpe+wmpdr";

impl BenchSettings {
    pub fn resolve(args: &BenchArgs, file: &ConfigFile) -> CliResult<Self> {
        let methods: String = pick(args.methods.clone(), file, "bench.methods", BENCH_METHODS.to_string())?;
        let methods: Vec<String> = methods.split(',').map(|m| m.trim().to_string()).filter(|m| !m.is_empty()).collect();
        for m in &methods {
            parse_with(m, str::parse::<Method>)?;
        }
        let rtf: String = pick(args.rtf.clone(), file, "bench.rtf", "mask".to_string())?;
        if rtf != "mask" && rtf != "oracle" {
            return Err(CliError::Config(format!("unknown steering source '{rtf}'")));
        }
        let settings = BenchSettings {
            seeds: pick(args.seeds, file, "bench.seeds", 20)?,
            methods,
            max_iters: pick(args.max_iters, file, "bench.max_iters", 5)?,
            rtf,
        };
        if settings.seeds == 0 || settings.max_iters == 0 {
            return Err(CliError::Config("seeds and max-iters must be at least 1".into()));
        }
        Ok(settings)
    }
}
