//! Delayed stacking of observations and the power-weighted covariances built
//! from them.

use ndarray::Array2;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{herm_solve, HermMatrix};
use crate::tfspace::Spectrogram;
use crate::{CMatrix, C64};

/// Shape of a delayed-stacked observation vector.
///
/// The stack holds the current frame followed by frames `t - delay` down to
/// `t - taps + 1`, channels contiguous within each frame, for a total
/// dimension of `channels * (taps - delay + 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StackLayout {
    pub channels: usize,
    pub delay: usize,
    pub taps: usize,
}

impl StackLayout {
    pub fn new(channels: usize, delay: usize, taps: usize) -> Result<Self> {
        if channels == 0 {
            return Err(Error::Config("at least one channel is required".into()));
        }
        if delay == 0 {
            return Err(Error::Config("prediction delay must be at least one frame".into()));
        }
        if taps < delay {
            return Err(Error::FilterShorterThanDelay);
        }
        Ok(StackLayout { channels, delay, taps })
    }

    pub fn dim(&self) -> usize {
        self.channels * self.blocks()
    }

    pub fn past_dim(&self) -> usize {
        self.dim() - self.channels
    }

    /// Number of frame blocks in the stack, the current frame included.
    pub fn blocks(&self) -> usize {
        self.taps - self.delay + 1
    }

    /// Frame lag of block `j`: zero for the current frame, then
    /// `delay, delay + 1, ...`.
    pub fn lag(&self, block: usize) -> usize {
        if block == 0 {
            0
        } else {
            self.delay + block - 1
        }
    }
}

/// Stacks the columns of an `M x T` frame matrix into a `D x T` matrix of
/// delayed observations. Frames before the start are zero-filled.
pub fn stack(frames: &CMatrix, layout: StackLayout) -> Result<CMatrix> {
    check_dim(layout.channels, frames.nrows())?;
    let (m, t_len) = (layout.channels, frames.ncols());
    let mut out = CMatrix::zeros(layout.dim(), t_len);
    for t in 0..t_len {
        for block in 0..layout.blocks() {
            let lag = layout.lag(block);
            if lag > t {
                continue;
            }
            for ch in 0..m {
                out[(block * m + ch, t)] = frames[(ch, t - lag)];
            }
        }
    }
    Ok(out)
}

/// [`stack`] applied to one bin of a spectrogram.
pub fn stack_bin(spec: &Spectrogram, bin: usize, delay: usize, taps: usize) -> Result<CMatrix> {
    let layout = StackLayout::new(spec.channels(), delay, taps)?;
    stack(&spec.bin_frames(bin), layout)
}

/// Per-frame, per-bin desired-signal power, `T x F`, strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdTrack {
    lambda: Array2<f64>,
}

impl PsdTrack {
    pub fn new(lambda: Array2<f64>) -> Result<Self> {
        if lambda.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::UnflooredPsd);
        }
        Ok(PsdTrack { lambda })
    }

    pub fn column(&self, bin: usize) -> Vec<f64> {
        self.lambda.column(bin).to_vec()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.lambda
    }
}

/// Channel-mean power `(1/M) sum_m |y_{m,t}|^2` of each frame.
pub fn channel_mean_power(frames: &CMatrix) -> Vec<f64> {
    let m = frames.nrows().max(1) as f64;
    frames
        .column_iter()
        .map(|col| col.iter().map(|v| v.norm_sqr()).sum::<f64>() / m)
        .collect()
}

/// Power of one channel per frame.
pub fn channel_power(frames: &CMatrix, ch: usize) -> Vec<f64> {
    frames.row(ch).iter().map(|v| v.norm_sqr()).collect()
}

/// Absolute PSD floor: `relative` times the mean observation power of the bin.
pub fn psd_floor(frames: &CMatrix, relative: f64) -> f64 {
    let n = frames.len().max(1) as f64;
    relative * frames.iter().map(|v| v.norm_sqr()).sum::<f64>() / n
}

pub fn apply_floor(lambda: &mut [f64], floor: f64) {
    for v in lambda.iter_mut() {
        if *v < floor {
            *v = floor;
        }
    }
}

/// `(1/T) sum_t x_t x_t^H / lambda_t` for the columns `x_t` of `frames`.
///
/// Entries are accumulated over frames in order and only the upper triangle
/// is computed; the lower triangle is its mirror.
pub fn weighted_gram(frames: &CMatrix, lambda: &[f64]) -> Result<HermMatrix> {
    check_dim(frames.ncols(), lambda.len())?;
    if lambda.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
        return Err(Error::UnflooredPsd);
    }
    let (d, t_len) = (frames.nrows(), frames.ncols());
    if t_len == 0 {
        return Err(Error::Config("no frames to accumulate".into()));
    }
    // Row-major copies so each frame trace is contiguous.
    let rows = frames.transpose();
    let inv: Vec<f64> = lambda.iter().map(|l| 1.0 / l).collect();
    let scaled = CMatrix::from_fn(t_len, d, |t, i| rows[(t, i)] * inv[t]);
    let norm = 1.0 / t_len as f64;
    let mut out = CMatrix::zeros(d, d);
    for j in 0..d {
        let sj = &scaled.as_slice()[j * t_len..(j + 1) * t_len];
        for i in 0..=j {
            let xi = &rows.as_slice()[i * t_len..(i + 1) * t_len];
            let acc = if i == j {
                let re: f64 = xi.iter().zip(sj).map(|(x, s)| (x * s.conj()).re).sum();
                C64::new(re, 0.0)
            } else {
                xi.iter().zip(sj).map(|(x, s)| x * s.conj()).sum::<C64>()
            };
            out[(i, j)] = acc * norm;
            out[(j, i)] = (acc * norm).conj();
        }
    }
    Ok(HermMatrix::from_hermitian_parts(out))
}

/// Unweighted sample covariance `(1/T) sum_t x_t x_t^H`.
pub fn sample_covariance(frames: &CMatrix) -> Result<HermMatrix> {
    weighted_gram(frames, &vec![1.0; frames.ncols()])
}

/// The weighted stacked covariance and its block partition
/// `[[ry, p^H], [p, rtilde]]`.
#[derive(Debug, Clone)]
pub struct CovarianceSet {
    pub rbar: HermMatrix,
    pub ry: HermMatrix,
    pub p: CMatrix,
    pub rtilde: HermMatrix,
    pub rd: Option<HermMatrix>,
    pub channels: usize,
    pub frames_used: usize,
}

impl CovarianceSet {
    pub fn from_rbar(rbar: HermMatrix, channels: usize, frames_used: usize) -> Result<Self> {
        let d = rbar.dim();
        if channels == 0 || channels > d {
            return Err(Error::Dimension { expected: d, got: channels });
        }
        let m = rbar.as_matrix();
        let ry = HermMatrix::from_hermitian_parts(m.view((0, 0), (channels, channels)).into_owned());
        let p = m.view((channels, 0), (d - channels, channels)).into_owned();
        let rtilde = HermMatrix::from_hermitian_parts(m.view((channels, channels), (d - channels, d - channels)).into_owned());
        Ok(CovarianceSet { rbar, ry, p, rtilde, rd: None, channels, frames_used })
    }

    pub fn dim(&self) -> usize {
        self.rbar.dim()
    }

    /// Rebuilds the full matrix from its blocks.
    pub fn reassemble(&self) -> CMatrix {
        let (d, m) = (self.dim(), self.channels);
        let mut out = CMatrix::zeros(d, d);
        out.view_mut((0, 0), (m, m)).copy_from(self.ry.as_matrix());
        out.view_mut((m, 0), (d - m, m)).copy_from(&self.p);
        out.view_mut((0, m), (m, d - m)).copy_from(&self.p.adjoint());
        out.view_mut((m, m), (d - m, d - m)).copy_from(self.rtilde.as_matrix());
        out
    }

    pub fn with_rd(mut self, rd: HermMatrix) -> Self {
        self.rd = Some(rd);
        self
    }
}

/// `Rbar = (1/T) sum_t ybar_t ybar_t^H / lambda_t` and its blocks.
pub fn weighted_covariance(stacked: &CMatrix, lambda: &[f64], channels: usize) -> Result<CovarianceSet> {
    let rbar = weighted_gram(stacked, lambda)?;
    CovarianceSet::from_rbar(rbar, channels, stacked.ncols())
}

/// Schur complement `Ry - P^H Rtilde^{-1} P`, with `Rtilde` diagonally loaded.
pub fn schur_rd(cov: &CovarianceSet, loading: f64) -> Result<HermMatrix> {
    if cov.p.nrows() == 0 {
        return Ok(cov.ry.clone());
    }
    let x = herm_solve(&cov.rtilde, &cov.p, loading).map_err(|e| match e {
        Error::Numeric(_) => Error::DegeneratePastCovariance,
        other => other,
    })?;
    HermMatrix::new(cov.ry.as_matrix() - cov.p.adjoint() * x)
}

/// `(1/T) sum_t d_t d_t^H / lambda_t` over dereverberated frames.
pub fn dereverb_covariance(dvr: &CMatrix, lambda: &[f64]) -> Result<HermMatrix> {
    weighted_gram(dvr, lambda)
}
