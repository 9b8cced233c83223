//! Numerical check that the unified convolutional beamformer and the
//! WPE + wMPDR cascade produce the same output.

use rayon::prelude::*;
use serde::Serialize;

use super::{bin_layout, validate_run, BinContext, PipelineConfig, RtfSource};
use crate::beamform::{apply_vector, solve_wmpdr, solve_wpd};
use crate::error::{Error, Result};
use crate::stats::{dereverb_covariance, stack, weighted_covariance, StackLayout};
use crate::tfspace::Spectrogram;
use crate::wpe::{apply_wpe, fit_wpe};
use crate::{CMatrix, CVector, C64};

/// Agreement threshold for double precision.
pub const EQUIVALENCE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceStats {
    /// Maximum over bins of the per-bin relative difference.
    pub max_rel_diff: f64,
    pub per_bin: Vec<f64>,
    pub tolerance: f64,
    pub passed: bool,
}

/// `z_t = wbar^H ybar_t` with `wbar` from the stacked covariance.
pub fn unified_output(stacked: &CMatrix, layout: StackLayout, lambda: &[f64], rtf: &CVector, loading: f64) -> Result<Vec<C64>> {
    let cov = weighted_covariance(stacked, lambda, layout.channels)?;
    let w = solve_wpd(&cov, rtf, loading)?;
    apply_vector(&w.w, stacked)
}

/// `z_t = q^H d_t` with WPE dereverberation followed by wMPDR on the
/// dereverberated covariance.
pub fn factorized_output(stacked: &CMatrix, layout: StackLayout, lambda: &[f64], rtf: &CVector, loading: f64) -> Result<Vec<C64>> {
    let cov = weighted_covariance(stacked, lambda, layout.channels)?;
    let g = fit_wpe(&cov, layout, loading)?;
    let d = apply_wpe(&g, stacked)?;
    let rd = dereverb_covariance(&d, lambda)?;
    let q = solve_wmpdr(&rd, rtf, loading)?;
    apply_vector(&q.w, &d)
}

/// `max_t |zf - zu| / max_t |zf|`, normalized by the largest factorized
/// output of the bin.
pub fn relative_difference(factorized: &[C64], unified: &[C64]) -> f64 {
    let diff = factorized.iter().zip(unified).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    let scale = factorized.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if diff == 0.0 {
        0.0
    } else if scale == 0.0 {
        f64::INFINITY
    } else {
        diff / scale
    }
}

/// Compares both paths on one bin. The two PSD tracks must be identical.
pub fn compare_bin(
    y: &CMatrix,
    layout: StackLayout,
    lambda_unified: &[f64],
    lambda_factorized: &[f64],
    rtf: &CVector,
    loading: f64,
) -> Result<f64> {
    if lambda_unified != lambda_factorized {
        return Err(Error::EquivalencePrecondition);
    }
    let stacked = stack(y, layout)?;
    let zu = unified_output(&stacked, layout, lambda_unified, rtf, loading)?;
    let zf = factorized_output(&stacked, layout, lambda_factorized, rtf, loading)?;
    Ok(relative_difference(&zf, &zu))
}

/// Runs both paths on every bin with the PSD fixed to the observation power
/// and a shared steering vector.
///
/// An estimated steering vector is computed once per bin, on the WPE output,
/// and fed to both paths.
pub fn verify_equivalence(spec: &Spectrogram, cfg: &PipelineConfig, source: &RtfSource, tolerance: f64) -> Result<EquivalenceStats> {
    let cfg = &cfg.clone().with_method(super::Method::Wpd);
    validate_run(spec, cfg, source)?;
    let frames = spec.frames();
    let per_bin = (0..spec.num_bins())
        .into_par_iter()
        .map(|k| {
            let y = spec.bin_frames(k);
            let layout = bin_layout(spec, cfg, k)?;
            let ctx = BinContext { cfg, layout, steering: source.for_bin(k, frames) };
            let lambda = ctx.initial_psd(&y);
            let rtf = match &ctx.steering {
                super::Steering::Fixed(_) => ctx.steer(&y)?,
                super::Steering::Weights(_) => {
                    let stacked = stack(&y, layout)?;
                    let cov = weighted_covariance(&stacked, &lambda, layout.channels)?;
                    let g = fit_wpe(&cov, layout, cfg.loading)?;
                    ctx.steer(&apply_wpe(&g, &stacked)?)?
                }
            };
            compare_bin(&y, layout, &lambda, &lambda, &rtf, cfg.loading)
        })
        .collect::<Result<Vec<f64>>>()?;
    let max_rel_diff = per_bin.iter().copied().fold(0.0, f64::max);
    Ok(EquivalenceStats { max_rel_diff, per_bin, tolerance, passed: max_rel_diff <= tolerance })
}
