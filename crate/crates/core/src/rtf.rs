//! Relative transfer function estimation by covariance whitening.
//!
//! The speech-class covariance is whitened with `Rn^{-1/2}`, its principal
//! eigenvector is mapped back with `Rn^{1/2}` and the result is normalized to
//! the reference channel.

use crate::error::{check_dim, Error, Result};
use crate::linalg::{herm_eig, whitening, HermMatrix};
use crate::{CMatrix, CVector, C64};

#[derive(Debug, Clone, PartialEq)]
pub struct RtfEstimate {
    /// Steering vector with `v[reference] == 1`.
    pub v: CVector,
    /// Share of whitened power not explained by the rank-one signal term;
    /// near 0 for a dominant source, near 1 when there is no signal.
    pub fit_error: f64,
    /// Set when the top two whitened eigenvalues are within `1e-8` relative.
    pub degenerate: bool,
}

impl RtfEstimate {
    pub fn reliable(&self) -> bool {
        !self.degenerate && self.fit_error < 0.5
    }
}

const TIE_TOLERANCE: f64 = 1e-8;
const REFERENCE_FLOOR: f64 = 1e-12;

pub fn estimate_rtf(rx: &HermMatrix, rn: &HermMatrix, loading: f64, reference: usize) -> Result<RtfEstimate> {
    check_dim(rx.dim(), rn.dim())?;
    if reference >= rx.dim() {
        return Err(Error::BadReferenceChannel);
    }
    let white = whitening(rn, loading)?;
    let w = white.forward.as_matrix();
    let s = HermMatrix::new(w * rx.as_matrix() * w.adjoint())?;
    let eig = herm_eig(&s)?;
    let top = eig.values[0];
    let second = eig.values.get(1).copied().unwrap_or(f64::NEG_INFINITY);
    let degenerate = (top - second) <= TIE_TOLERANCE * top.abs();
    let trace = s.trace();
    let fit_error = if trace > 0.0 { 1.0 - (top - 1.0).max(0.0) / trace } else { 1.0 };

    let u = eig.vectors.column(0).into_owned();
    let raw = white.inverse.as_matrix() * u;
    let pivot = raw[reference];
    if pivot.norm() <= REFERENCE_FLOOR * raw.norm() {
        return Err(Error::BadReferenceChannel);
    }
    let mut v = raw / pivot;
    v[reference] = C64::new(1.0, 0.0);
    Ok(RtfEstimate { v, fit_error: fit_error.clamp(0.0, 1.0), degenerate })
}

/// Speech- and noise-class covariances from per-frame speech weights:
/// `Rx = sum m f f^H / sum m` and `Rn = sum (1-m) f f^H / sum (1-m)`.
pub fn signal_covariances(frames: &CMatrix, weights: &[f64]) -> Result<(HermMatrix, HermMatrix)> {
    check_dim(frames.ncols(), weights.len())?;
    if weights.iter().any(|w| !(0.0..=1.0).contains(w)) {
        return Err(Error::Config("mask weights must lie in [0, 1]".into()));
    }
    let speech: f64 = weights.iter().sum();
    let noise: f64 = weights.iter().map(|w| 1.0 - w).sum();
    if !(speech > 0.0) || !(noise > 0.0) {
        return Err(Error::EmptyClass);
    }
    let complement: Vec<f64> = weights.iter().map(|w| 1.0 - w).collect();
    Ok((weighted_mean_gram(frames, weights, speech), weighted_mean_gram(frames, &complement, noise)))
}

fn weighted_mean_gram(frames: &CMatrix, weights: &[f64], total: f64) -> HermMatrix {
    let m = frames.nrows();
    let mut out = CMatrix::zeros(m, m);
    for j in 0..m {
        for i in 0..=j {
            let mut acc = C64::new(0.0, 0.0);
            for (t, &w) in weights.iter().enumerate() {
                if w != 0.0 {
                    acc += frames[(i, t)] * frames[(j, t)].conj() * w;
                }
            }
            acc /= total;
            if i == j {
                acc.im = 0.0;
            }
            out[(i, j)] = acc;
            out[(j, i)] = acc.conj();
        }
    }
    HermMatrix::from_hermitian_parts(out)
}

/// Speech weights from a set of noise-only frame indices: 0 on marked
/// frames, 1 elsewhere.
pub fn weights_from_noise_frames(frames: usize, noise_frames: &[usize]) -> Vec<f64> {
    let mut w = vec![1.0; frames];
    for &t in noise_frames {
        if t < frames {
            w[t] = 0.0;
        }
    }
    w
}

/// Hermitian angle `acos(|a^H b| / (|a| |b|))` between two steering vectors.
pub fn hermitian_angle(a: &CVector, b: &CVector) -> f64 {
    let c = a.dotc(b).norm() / (a.norm() * b.norm());
    c.clamp(0.0, 1.0).acos()
}
