//! Multichannel STFT analysis and overlap-add synthesis.
//!
//! Analysis zero-pads both ends by `frame_len - hop` samples and applies a
//! periodic Hann window. Synthesis uses the canonical dual window, so the
//! round trip is exact wherever every overlapping frame is present (all of
//! the signal except at most the last `frame_len` samples).

use std::f64::consts::PI;

use ndarray::{Array2, Array3};
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::{CMatrix, C64};

/// Real multichannel audio, `num_samples x channels`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveBlock {
    pub samples: Array2<f64>,
    pub sample_rate: u32,
}

impl WaveBlock {
    pub fn new(samples: Array2<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Metadata("sample rate must be positive".into()));
        }
        Ok(WaveBlock { samples, sample_rate })
    }

    pub fn num_samples(&self) -> usize {
        self.samples.nrows()
    }

    pub fn channels(&self) -> usize {
        self.samples.ncols()
    }
}

/// One-sided complex spectrogram, `frames x bins x channels`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub bins: Array3<C64>,
    pub frame_len: usize,
    pub hop: usize,
    pub sample_rate: u32,
}

impl Spectrogram {
    pub fn new(bins: Array3<C64>, frame_len: usize, hop: usize, sample_rate: u32) -> Result<Self> {
        validate_geometry(frame_len, hop)?;
        if bins.shape()[1] != frame_len / 2 + 1 {
            return Err(Error::Metadata(format!(
                "{} bins do not match frame length {frame_len}",
                bins.shape()[1]
            )));
        }
        if sample_rate == 0 {
            return Err(Error::Metadata("sample rate must be positive".into()));
        }
        Ok(Spectrogram { bins, frame_len, hop, sample_rate })
    }

    pub fn zeros(frames: usize, channels: usize, frame_len: usize, hop: usize, sample_rate: u32) -> Result<Self> {
        Spectrogram::new(Array3::zeros((frames, frame_len / 2 + 1, channels)), frame_len, hop, sample_rate)
    }

    pub fn frames(&self) -> usize {
        self.bins.shape()[0]
    }

    pub fn num_bins(&self) -> usize {
        self.bins.shape()[1]
    }

    pub fn channels(&self) -> usize {
        self.bins.shape()[2]
    }

    /// Center frequency of bin `k` in Hz.
    pub fn bin_frequency(&self, k: usize) -> f64 {
        k as f64 * self.sample_rate as f64 / self.frame_len as f64
    }

    /// The observations of one bin as an `M x T` matrix.
    pub fn bin_frames(&self, k: usize) -> CMatrix {
        let (t, _, m) = self.bins.dim();
        CMatrix::from_fn(m, t, |ch, frame| self.bins[[frame, k, ch]])
    }

    pub fn set_bin_frames(&mut self, k: usize, frames: &CMatrix) -> Result<()> {
        crate::error::check_dim(self.channels(), frames.nrows())?;
        crate::error::check_dim(self.frames(), frames.ncols())?;
        for t in 0..frames.ncols() {
            for ch in 0..frames.nrows() {
                self.bins[[t, k, ch]] = frames[(ch, t)];
            }
        }
        Ok(())
    }

    /// Single-channel view of channel `ch`.
    pub fn channel(&self, ch: usize) -> Spectrogram {
        Spectrogram {
            bins: self.bins.slice(ndarray::s![.., .., ch..ch + 1]).to_owned(),
            frame_len: self.frame_len,
            hop: self.hop,
            sample_rate: self.sample_rate,
        }
    }

    pub fn same_grid(&self, other: &Spectrogram) -> bool {
        self.frames() == other.frames()
            && self.num_bins() == other.num_bins()
            && self.frame_len == other.frame_len
            && self.hop == other.hop
            && self.sample_rate == other.sample_rate
    }
}

fn validate_geometry(frame_len: usize, hop: usize) -> Result<()> {
    if hop == 0 || hop > frame_len || !frame_len.is_multiple_of(hop) {
        return Err(Error::InvalidHop);
    }
    if !frame_len.is_multiple_of(2) {
        return Err(Error::Metadata(format!("frame length {frame_len} must be even")));
    }
    Ok(())
}

/// Periodic Hann window.
pub fn hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
        .collect()
}

/// Synthesis window dual to [`hann`] for the given hop.
pub fn dual_window(frame_len: usize, hop: usize) -> Result<Vec<f64>> {
    validate_geometry(frame_len, hop)?;
    let w = hann(frame_len);
    let mut dual = Vec::with_capacity(frame_len);
    for n in 0..frame_len {
        let mut energy = 0.0;
        let mut k = n % hop;
        while k < frame_len {
            energy += w[k] * w[k];
            k += hop;
        }
        if energy <= 1e-12 {
            return Err(Error::Metadata(format!(
                "hop {hop} leaves the Hann window without overlap at sample {n}"
            )));
        }
        dual.push(w[n] / energy);
    }
    Ok(dual)
}

/// Number of frames `analyze` produces for a signal of `num_samples`.
pub fn frame_count(num_samples: usize, hop: usize) -> usize {
    num_samples.div_ceil(hop)
}

pub fn analyze(wave: &WaveBlock, frame_len: usize, hop: usize) -> Result<Spectrogram> {
    if hop == 0 || hop > frame_len {
        return Err(Error::InvalidHop);
    }
    validate_geometry(frame_len, hop)?;
    let n = wave.num_samples();
    if n == 0 || wave.channels() == 0 {
        return Err(Error::EmptySignal);
    }
    let pad = frame_len - hop;
    let frames = frame_count(n, hop);
    let bins = frame_len / 2 + 1;
    let window = hann(frame_len);
    let fft = FftPlanner::new().plan_fft_forward(frame_len);
    let mut out = Array3::<C64>::zeros((frames, bins, wave.channels()));
    let mut buf = vec![C64::new(0.0, 0.0); frame_len];
    for ch in 0..wave.channels() {
        let x = wave.samples.column(ch);
        for t in 0..frames {
            for (i, slot) in buf.iter_mut().enumerate() {
                let p = (t * hop + i) as isize - pad as isize;
                let sample = if p >= 0 && (p as usize) < n { x[p as usize] } else { 0.0 };
                *slot = C64::new(sample * window[i], 0.0);
            }
            fft.process(&mut buf);
            for k in 0..bins {
                out[[t, k, ch]] = buf[k];
            }
        }
    }
    Spectrogram::new(out, frame_len, hop, wave.sample_rate)
}

/// Overlap-add inverse of [`analyze`]; returns `frames * hop` samples.
pub fn synthesize(spec: &Spectrogram) -> Result<WaveBlock> {
    let (frame_len, hop) = (spec.frame_len, spec.hop);
    validate_geometry(frame_len, hop)?;
    if spec.num_bins() != frame_len / 2 + 1 {
        return Err(Error::Metadata("bin count does not match frame length".into()));
    }
    let dual = dual_window(frame_len, hop)?;
    let pad = frame_len - hop;
    let frames = spec.frames();
    let len = frames * hop;
    let ifft = FftPlanner::new().plan_fft_inverse(frame_len);
    let mut samples = Array2::<f64>::zeros((len, spec.channels()));
    let mut buf = vec![C64::new(0.0, 0.0); frame_len];
    let bins = spec.num_bins();
    let scale = 1.0 / frame_len as f64;
    for ch in 0..spec.channels() {
        for t in 0..frames {
            for (k, slot) in buf.iter_mut().take(bins).enumerate() {
                *slot = spec.bins[[t, k, ch]];
            }
            // Hermitian extension; DC and Nyquist must be real.
            buf[0].im = 0.0;
            buf[frame_len / 2].im = 0.0;
            for k in 1..frame_len / 2 {
                buf[frame_len - k] = buf[k].conj();
            }
            ifft.process(&mut buf);
            for (i, v) in buf.iter().enumerate() {
                let p = (t * hop + i) as isize - pad as isize;
                if p >= 0 && (p as usize) < len {
                    samples[[p as usize, ch]] += v.re * scale * dual[i];
                }
            }
        }
    }
    WaveBlock::new(samples, spec.sample_rate)
}
