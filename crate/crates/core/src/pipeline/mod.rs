//! Full enhancement runs over every frequency bin, the unified-versus-
//! factorized equivalence verifier, and oracle-based metrics.
//!
//! Bins are independent work units and run in parallel; within a bin the
//! PSD iterations are sequential. Output does not depend on the worker
//! count.

mod config;
pub mod metrics;
pub mod verify;

use std::collections::BTreeMap;

use ndarray::Array2;
use rayon::prelude::*;

pub use config::{format_lw_bands, parse_lw_bands, Beamformer, LambdaInit, LwBand, Method, PipelineConfig};
pub use verify::{verify_equivalence, EquivalenceStats, EQUIVALENCE_TOLERANCE};

use crate::beamform::{apply_vector, solve_mpdr, solve_mvdr, solve_wmpdr, solve_wpd};
use crate::error::{check_dim, Error, Result};
use crate::rtf::{estimate_rtf, signal_covariances, weights_from_noise_frames};
use crate::stats::{
    apply_floor, channel_mean_power, channel_power, dereverb_covariance, psd_floor, sample_covariance, stack,
    weighted_covariance, StackLayout,
};
use crate::tfspace::Spectrogram;
use crate::wpe::{apply_wpe, fit_wpe, DereverbFilter};
use crate::{CMatrix, CVector, C64};

/// Where the steering vector comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum RtfSource {
    /// Known RTF per bin.
    Oracle(Vec<CVector>),
    /// Speech-presence weights in `[0, 1]`, `frames x bins`; the complement
    /// weights the noise class.
    Mask(Array2<f64>),
    /// Indices of noise-only frames.
    NoiseFrames(Vec<usize>),
}

impl RtfSource {
    fn validate(&self, spec: &Spectrogram) -> Result<()> {
        match self {
            RtfSource::Oracle(v) => {
                check_dim(spec.num_bins(), v.len())?;
                v.iter().try_for_each(|r| check_dim(spec.channels(), r.len()))
            }
            RtfSource::Mask(mask) => {
                if mask.dim() != (spec.frames(), spec.num_bins()) {
                    return Err(Error::Config(format!(
                        "mask is {:?}, spectrogram grid is {:?}",
                        mask.dim(),
                        (spec.frames(), spec.num_bins())
                    )));
                }
                if mask.iter().any(|m| !(0.0..=1.0).contains(m)) {
                    return Err(Error::Config("mask weights must lie in [0, 1]".into()));
                }
                Ok(())
            }
            RtfSource::NoiseFrames(f) => {
                if f.iter().any(|&t| t >= spec.frames()) {
                    return Err(Error::Config("noise frame index out of range".into()));
                }
                if f.is_empty() {
                    return Err(Error::EmptyClass);
                }
                Ok(())
            }
        }
    }

    fn for_bin(&self, bin: usize, frames: usize) -> Steering {
        match self {
            RtfSource::Oracle(v) => Steering::Fixed(v[bin].clone()),
            RtfSource::Mask(mask) => Steering::Weights(mask.column(bin).to_vec()),
            RtfSource::NoiseFrames(f) => Steering::Weights(weights_from_noise_frames(frames, f)),
        }
    }

    fn has_noise_class(&self) -> bool {
        !matches!(self, RtfSource::Oracle(_))
    }
}

/// Per-bin steering information.
#[derive(Debug, Clone)]
pub(crate) enum Steering {
    Fixed(CVector),
    Weights(Vec<f64>),
}

/// The stacked linear filter a bin ended up with: `z_t = w^H ybar_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFilter {
    pub weights: CVector,
    pub layout: StackLayout,
}

impl LinearFilter {
    pub fn passthrough(channels: usize, reference: usize, delay: usize) -> Self {
        let mut weights = CVector::zeros(channels);
        weights[reference] = C64::new(1.0, 0.0);
        LinearFilter { weights, layout: StackLayout { channels, delay, taps: delay } }
    }

    /// `Gbar q`, the stacked form of dereverberation followed by `q`.
    pub fn cascade(filter: &DereverbFilter, q: &CVector) -> Self {
        LinearFilter { weights: filter.stacked_matrix() * q, layout: filter.layout }
    }

    pub fn apply(&self, frames: &CMatrix) -> Result<Vec<C64>> {
        apply_vector(&self.weights, &stack(frames, self.layout)?)
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    /// Single-channel enhanced spectrogram.
    pub enhanced: Spectrogram,
    /// Objective value after each PSD update, per bin.
    pub per_iteration_loglik: Vec<Vec<f64>>,
    /// Final filter per bin.
    pub filters: Vec<LinearFilter>,
    /// Bins that failed numerically and fell back to pass-through.
    pub failed_bins: Vec<(usize, String)>,
    pub metrics: BTreeMap<String, f64>,
    pub equivalence_stats: Option<EquivalenceStats>,
    pub reference_channel: usize,
}

/// `(1/T) sum_t (-ln lambda_t - |z_t|^2 / lambda_t)`.
pub fn log_likelihood(z: &[C64], lambda: &[f64]) -> f64 {
    let n = z.len().max(1) as f64;
    z.iter().zip(lambda).map(|(z, l)| -l.ln() - z.norm_sqr() / l).sum::<f64>() / n
}

/// WPE objective averaged over channels.
fn multichannel_log_likelihood(d: &CMatrix, lambda: &[f64]) -> f64 {
    let power = channel_mean_power(d);
    let n = lambda.len().max(1) as f64;
    power.iter().zip(lambda).map(|(p, l)| -l.ln() - p / l).sum::<f64>() / n
}

/// `lambda_t = max(|z_t|^2, floor)`.
pub fn update_psd(z: &[C64], floor: f64) -> Vec<f64> {
    let mut lambda: Vec<f64> = z.iter().map(|v| v.norm_sqr()).collect();
    apply_floor(&mut lambda, floor);
    lambda
}

#[derive(Debug, Clone)]
pub(crate) struct BinContext<'a> {
    pub cfg: &'a PipelineConfig,
    pub layout: StackLayout,
    pub steering: Steering,
}

impl BinContext<'_> {
    pub(crate) fn floor(&self, y: &CMatrix) -> f64 {
        psd_floor(y, self.cfg.lambda_floor)
    }

    pub(crate) fn initial_psd(&self, y: &CMatrix) -> Vec<f64> {
        let mut lambda = match self.cfg.lambda_init {
            LambdaInit::ChannelMean => channel_mean_power(y),
            LambdaInit::Reference => channel_power(y, self.cfg.reference_channel),
        };
        apply_floor(&mut lambda, self.floor(y));
        lambda
    }

    /// Steering vector, estimated on `frames` when it is not fixed.
    pub(crate) fn steer(&self, frames: &CMatrix) -> Result<CVector> {
        let reference = self.cfg.reference_channel;
        match &self.steering {
            Steering::Fixed(v) => {
                let pivot = v[reference];
                if pivot.norm() == 0.0 {
                    return Err(Error::BadReferenceChannel);
                }
                let mut v = v / pivot;
                v[reference] = C64::new(1.0, 0.0);
                Ok(v)
            }
            Steering::Weights(w) => {
                let (rx, rn) = signal_covariances(frames, w)?;
                Ok(estimate_rtf(&rx, &rn, self.cfg.loading, reference)?.v)
            }
        }
    }

    fn spatial(&self, kind: Beamformer, frames: &CMatrix, lambda: &[f64], v: &CVector) -> Result<CVector> {
        let loading = self.cfg.loading;
        let q = match kind {
            Beamformer::Wmpdr => solve_wmpdr(&dereverb_covariance(frames, lambda)?, v, loading)?,
            Beamformer::Mpdr => solve_mpdr(&sample_covariance(frames)?, v, loading)?,
            Beamformer::Mvdr => match &self.steering {
                Steering::Weights(w) => solve_mvdr(&signal_covariances(frames, w)?.1, v, loading)?,
                Steering::Fixed(_) => return Err(Error::Config("MVDR needs a mask or noise frames".into())),
            },
        };
        Ok(q.w)
    }

    fn wpe_step(&self, stacked: &CMatrix, lambda: &[f64]) -> Result<(DereverbFilter, CMatrix)> {
        let cov = weighted_covariance(stacked, lambda, self.layout.channels)?;
        let g = fit_wpe(&cov, self.layout, self.cfg.loading)?;
        let d = apply_wpe(&g, stacked)?;
        Ok((g, d))
    }
}

#[derive(Debug, Clone)]
pub(crate) struct BinOutcome {
    pub z: Vec<C64>,
    pub filter: LinearFilter,
    pub loglik: Vec<f64>,
}

pub(crate) fn process_bin(y: &CMatrix, ctx: &BinContext) -> Result<BinOutcome> {
    let cfg = ctx.cfg;
    let (m, reference) = (y.nrows(), cfg.reference_channel);
    let floor = ctx.floor(y);
    let mut lambda = ctx.initial_psd(y);
    let mut loglik = Vec::with_capacity(cfg.iterations);

    let outcome = match cfg.method {
        Method::Obs => {
            let filter = LinearFilter::passthrough(m, reference, cfg.delay);
            BinOutcome { z: y.row(reference).iter().copied().collect(), filter, loglik }
        }
        Method::Wpd => {
            let stacked = stack(y, ctx.layout)?;
            let mut last = None;
            for _ in 0..cfg.iterations {
                let cov = weighted_covariance(&stacked, &lambda, m)?;
                let v = match &ctx.steering {
                    Steering::Fixed(_) => ctx.steer(y)?,
                    Steering::Weights(_) => {
                        let g = fit_wpe(&cov, ctx.layout, cfg.loading)?;
                        ctx.steer(&apply_wpe(&g, &stacked)?)?
                    }
                };
                let w = solve_wpd(&cov, &v, cfg.loading)?.w;
                let z = apply_vector(&w, &stacked)?;
                lambda = update_psd(&z, floor);
                loglik.push(log_likelihood(&z, &lambda));
                last = Some((z, LinearFilter { weights: w, layout: ctx.layout }));
            }
            let (z, filter) = last.expect("at least one iteration");
            BinOutcome { z, filter, loglik }
        }
        Method::WpeOnly => {
            let stacked = stack(y, ctx.layout)?;
            let (g, d) = wpe_loop(ctx, &stacked, &mut lambda, cfg.iterations, floor, &mut loglik)?;
            let mut e_ref = CVector::zeros(m);
            e_ref[reference] = C64::new(1.0, 0.0);
            BinOutcome { z: d.row(reference).iter().copied().collect(), filter: LinearFilter::cascade(&g, &e_ref), loglik }
        }
        Method::BfOnly(kind) => {
            let layout = StackLayout::new(m, cfg.delay, cfg.delay)?;
            let (q, z) = beamformer_loop(ctx, kind, y, &mut lambda, cfg.iterations, floor, &mut loglik)?;
            BinOutcome { z, filter: LinearFilter { weights: q, layout }, loglik }
        }
        Method::Joint(kind) => {
            let stacked = stack(y, ctx.layout)?;
            let mut last = None;
            for _ in 0..cfg.iterations {
                let (g, d) = ctx.wpe_step(&stacked, &lambda)?;
                let v = ctx.steer(&d)?;
                let q = ctx.spatial(kind, &d, &lambda, &v)?;
                let z = apply_vector(&q, &d)?;
                lambda = update_psd(&z, floor);
                loglik.push(log_likelihood(&z, &lambda));
                last = Some((z, LinearFilter::cascade(&g, &q)));
            }
            let (z, filter) = last.expect("at least one iteration");
            BinOutcome { z, filter, loglik }
        }
        Method::Separate(kind) => {
            let stacked = stack(y, ctx.layout)?;
            let inner = cfg.separate_inner_iterations.unwrap_or(cfg.iterations);
            let (g, d) = wpe_loop(ctx, &stacked, &mut lambda, inner, floor, &mut loglik)?;
            let mut bf_lambda = channel_mean_power(&d);
            apply_floor(&mut bf_lambda, floor);
            let (q, z) = beamformer_loop(ctx, kind, &d, &mut bf_lambda, cfg.iterations, floor, &mut loglik)?;
            BinOutcome { z, filter: LinearFilter::cascade(&g, &q), loglik }
        }
    };
    Ok(outcome)
}

/// WPE iterated on its own output power.
fn wpe_loop(
    ctx: &BinContext,
    stacked: &CMatrix,
    lambda: &mut Vec<f64>,
    iterations: usize,
    floor: f64,
    loglik: &mut Vec<f64>,
) -> Result<(DereverbFilter, CMatrix)> {
    let mut last = None;
    for _ in 0..iterations {
        let (g, d) = ctx.wpe_step(stacked, lambda)?;
        *lambda = channel_mean_power(&d);
        apply_floor(lambda, floor);
        loglik.push(multichannel_log_likelihood(&d, lambda));
        last = Some((g, d));
    }
    Ok(last.expect("at least one iteration"))
}

/// Beamformer iterated on its own output power over fixed input frames.
fn beamformer_loop(
    ctx: &BinContext,
    kind: Beamformer,
    frames: &CMatrix,
    lambda: &mut Vec<f64>,
    iterations: usize,
    floor: f64,
    loglik: &mut Vec<f64>,
) -> Result<(CVector, Vec<C64>)> {
    let v = ctx.steer(frames)?;
    let mut last = None;
    for _ in 0..iterations {
        let q = ctx.spatial(kind, frames, lambda, &v)?;
        let z = apply_vector(&q, frames)?;
        *lambda = update_psd(&z, floor);
        loglik.push(log_likelihood(&z, lambda));
        last = Some((q, z));
    }
    Ok(last.expect("at least one iteration"))
}

pub(crate) fn validate_run(spec: &Spectrogram, cfg: &PipelineConfig, source: &RtfSource) -> Result<()> {
    if spec.frames() == 0 || spec.channels() == 0 {
        return Err(Error::EmptySignal);
    }
    cfg.validate(spec.sample_rate, spec.channels())?;
    if cfg.method.needs_steering() {
        source.validate(spec)?;
    }
    if cfg.method.beamformer() == Some(Beamformer::Mvdr) && !source.has_noise_class() {
        return Err(Error::Config("MVDR needs a mask or noise frames".into()));
    }
    Ok(())
}

/// Layout for bin `k`: the band's filter length for convolutional methods.
pub(crate) fn bin_layout(spec: &Spectrogram, cfg: &PipelineConfig, k: usize) -> Result<StackLayout> {
    let taps = if cfg.method.is_convolutional() || cfg.method == Method::Wpd {
        cfg.taps_for(spec.bin_frequency(k))
            .ok_or_else(|| Error::Config(format!("no filter length covers {} Hz", spec.bin_frequency(k))))?
    } else {
        cfg.delay
    };
    StackLayout::new(spec.channels(), cfg.delay, taps)
}

/// Runs the configured method on every bin.
pub fn run(spec: &Spectrogram, cfg: &PipelineConfig, source: &RtfSource) -> Result<RunReport> {
    validate_run(spec, cfg, source)?;
    let (t_len, f_len) = (spec.frames(), spec.num_bins());
    let layouts = (0..f_len).map(|k| bin_layout(spec, cfg, k)).collect::<Result<Vec<_>>>()?;

    let outcomes: Vec<(BinOutcome, Option<String>)> = (0..f_len)
        .into_par_iter()
        .map(|k| {
            let y = spec.bin_frames(k);
            let ctx = BinContext { cfg, layout: layouts[k], steering: source.for_bin(k, t_len) };
            match process_bin(&y, &ctx) {
                Ok(out) => (out, None),
                Err(e) => {
                    let filter = LinearFilter::passthrough(y.nrows(), cfg.reference_channel, cfg.delay);
                    let z = y.row(cfg.reference_channel).iter().copied().collect();
                    (BinOutcome { z, filter, loglik: Vec::new() }, Some(e.to_string()))
                }
            }
        })
        .collect();

    let mut enhanced = Spectrogram::zeros(t_len, 1, spec.frame_len, spec.hop, spec.sample_rate)?;
    let mut per_iteration_loglik = Vec::with_capacity(f_len);
    let mut filters = Vec::with_capacity(f_len);
    let mut failed_bins = Vec::new();
    for (k, (out, failure)) in outcomes.into_iter().enumerate() {
        for (t, z) in out.z.iter().enumerate() {
            enhanced.bins[[t, k, 0]] = *z;
        }
        if let Some(msg) = failure {
            failed_bins.push((k, msg));
        }
        per_iteration_loglik.push(out.loglik);
        filters.push(out.filter);
    }
    let mut metrics = BTreeMap::new();
    metrics.insert("failed_bins".to_string(), failed_bins.len() as f64);
    let finals: Vec<f64> = per_iteration_loglik.iter().filter_map(|l| l.last().copied()).collect();
    if !finals.is_empty() {
        metrics.insert("mean_final_loglik".to_string(), finals.iter().sum::<f64>() / finals.len() as f64);
    }
    Ok(RunReport {
        enhanced,
        per_iteration_loglik,
        filters,
        failed_bins,
        metrics,
        equivalence_stats: None,
        reference_channel: cfg.reference_channel,
    })
}
