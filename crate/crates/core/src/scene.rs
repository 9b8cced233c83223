//! Synthetic multichannel scenes generated directly from the convolutive
//! STFT-domain signal model, with every component kept as ground truth.
//!
//! Per bin, `y_t = sum_tau a_tau s_{t-tau} + n_t`, split into the early part
//! (`tau < delay`), the late part (`tau >= delay`) and spatially white noise.

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::tfspace::Spectrogram;
use crate::{CMatrix, CVector, C64};

/// Source transfer functions of a scene.
#[derive(Debug, Clone, PartialEq)]
pub enum AtfRecipe {
    /// Complex Gaussian taps with amplitude decay `exp(-tau/4)`, scaled so
    /// that the direct tap has unit norm.
    Random,
    /// One `atf_len x channels` matrix per bin.
    Explicit(Vec<CMatrix>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceModel {
    /// Log-variance follows a smoothed Gaussian random walk.
    TimeVarying,
    /// Unit variance in every frame.
    Stationary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub channels: usize,
    /// Transfer-function length in frames.
    pub atf_len: usize,
    /// First frame lag counted as late reverberation.
    pub delay: usize,
    pub frames: usize,
    /// Image-to-noise ratio; `f64::INFINITY` disables noise.
    pub snr_db: f64,
    pub seed: u64,
    pub frame_len: usize,
    pub hop: usize,
    pub sample_rate: u32,
    pub atf: AtfRecipe,
    pub source: SourceModel,
}

impl SceneSpec {
    /// A random-ATF, time-varying-source scene on a small 17-bin grid
    /// (`frame_len = 32`, `hop = 8`, 16 kHz).
    pub fn new(channels: usize, atf_len: usize, delay: usize, frames: usize, snr_db: f64, seed: u64) -> Self {
        SceneSpec {
            channels,
            atf_len,
            delay,
            frames,
            snr_db,
            seed,
            frame_len: 32,
            hop: 8,
            sample_rate: 16000,
            atf: AtfRecipe::Random,
            source: SourceModel::TimeVarying,
        }
    }

    pub fn bins(&self) -> usize {
        self.frame_len / 2 + 1
    }

    pub fn with_grid(mut self, frame_len: usize, hop: usize) -> Self {
        self.frame_len = frame_len;
        self.hop = hop;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.delay == 0 || self.delay > self.atf_len {
            return Err(Error::InvalidSplit);
        }
        if self.channels == 0 {
            return Err(Error::InvalidScene("at least one channel is required".into()));
        }
        if self.frames < self.atf_len {
            return Err(Error::InvalidScene(format!(
                "{} frames cannot hold a {}-frame transfer function",
                self.frames, self.atf_len
            )));
        }
        if self.snr_db.is_nan() {
            return Err(Error::InvalidScene("SNR is NaN".into()));
        }
        if let AtfRecipe::Explicit(atf) = &self.atf {
            if atf.len() != self.bins()
                || atf.iter().any(|a| a.nrows() != self.atf_len || a.ncols() != self.channels)
            {
                return Err(Error::InvalidScene("explicit ATF has the wrong shape".into()));
            }
        }
        Ok(())
    }
}

/// Ground truth of a generated scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneTruth {
    pub observation: Spectrogram,
    /// Source signal `s_t`, `frames x bins`.
    pub source: Array2<C64>,
    pub early: Spectrogram,
    pub late: Spectrogram,
    pub noise: Spectrogram,
    /// Full transfer function per bin, `atf_len x channels`.
    pub atf: Vec<CMatrix>,
    /// Direct tap `a_0` per bin.
    pub atf0: Vec<CVector>,
    /// `a_0 / a_{0,0}` per bin.
    pub rtf: Vec<CVector>,
    /// `|d_1|^2 / (|d_1|^2 + |r_1 + n_1|^2)`, `frames x bins`.
    pub oracle_mask: Array2<f64>,
    /// Frames that hold noise only, sorted.
    pub noise_frames: Vec<usize>,
    pub delay: usize,
}

impl SceneTruth {
    /// Noise-free source image `early + late`.
    pub fn image(&self) -> Spectrogram {
        let mut out = self.early.clone();
        out.bins = &self.early.bins + &self.late.bins;
        out
    }

    fn assemble(&mut self) {
        self.observation.bins = &(&self.early.bins + &self.late.bins) + &self.noise.bins;
        self.oracle_mask = oracle_mask(&self.early, &self.late, &self.noise);
    }
}

const LOG_VAR_SMOOTHING: f64 = 0.9;
const LOG_VAR_SPREAD: f64 = 1.5;
const VARIANCE_FLOOR: f64 = 1e-4;

fn complex_normal(rng: &mut ChaCha8Rng, variance: f64) -> C64 {
    let scale = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re * scale, im * scale)
}

fn random_atf(rng: &mut ChaCha8Rng, len: usize, channels: usize) -> CMatrix {
    let mut a = CMatrix::from_fn(len, channels, |_, _| C64::new(0.0, 0.0));
    for tau in 0..len {
        let decay = (-(tau as f64) / 4.0).exp();
        for m in 0..channels {
            a[(tau, m)] = complex_normal(rng, 1.0) * decay;
        }
    }
    let direct = a.row(0).norm();
    a / C64::new(direct, 0.0)
}

fn variance_profile(rng: &mut ChaCha8Rng, frames: usize, model: SourceModel) -> Vec<f64> {
    match model {
        SourceModel::Stationary => vec![1.0; frames],
        SourceModel::TimeVarying => {
            let innovation = (1.0 - LOG_VAR_SMOOTHING * LOG_VAR_SMOOTHING).sqrt() * LOG_VAR_SPREAD;
            let mut x: f64 = rng.sample::<f64, _>(StandardNormal) * LOG_VAR_SPREAD;
            let mut var: Vec<f64> = (0..frames)
                .map(|_| {
                    x = LOG_VAR_SMOOTHING * x + innovation * rng.sample::<f64, _>(StandardNormal);
                    x.exp()
                })
                .collect();
            let mean = var.iter().sum::<f64>() / frames as f64;
            for v in var.iter_mut() {
                *v = (*v / mean).max(VARIANCE_FLOOR);
            }
            var
        }
    }
}

/// Early and late images of one bin, each `channels x frames`.
fn convolve(source: ndarray::ArrayView1<C64>, atf: &CMatrix, delay: usize) -> (CMatrix, CMatrix) {
    let (len, channels) = (atf.nrows(), atf.ncols());
    let frames = source.len();
    let mut early = CMatrix::zeros(channels, frames);
    let mut late = CMatrix::zeros(channels, frames);
    for t in 0..frames {
        for tau in 0..len.min(t + 1) {
            let s = source[t - tau];
            let target = if tau < delay { &mut early } else { &mut late };
            for m in 0..channels {
                target[(m, t)] += atf[(tau, m)] * s;
            }
        }
    }
    (early, late)
}

fn oracle_mask(early: &Spectrogram, late: &Spectrogram, noise: &Spectrogram) -> Array2<f64> {
    Array2::from_shape_fn((early.frames(), early.num_bins()), |(t, k)| {
        let d = early.bins[[t, k, 0]].norm_sqr();
        let rest = (late.bins[[t, k, 0]] + noise.bins[[t, k, 0]]).norm_sqr();
        if d + rest > 0.0 {
            d / (d + rest)
        } else {
            0.0
        }
    })
}

fn fill_images(spec_t: usize, source: &Array2<C64>, atf: &[CMatrix], delay: usize, early: &mut Spectrogram, late: &mut Spectrogram) {
    debug_assert_eq!(source.nrows(), spec_t);
    for (k, a) in atf.iter().enumerate() {
        let (e, l) = convolve(source.column(k), a, delay);
        for t in 0..spec_t {
            for m in 0..a.ncols() {
                early.bins[[t, k, m]] = e[(m, t)];
                late.bins[[t, k, m]] = l[(m, t)];
            }
        }
    }
}

pub fn synthesize_scene(spec: &SceneSpec) -> Result<SceneTruth> {
    spec.validate()?;
    let (t_len, f_len, m) = (spec.frames, spec.bins(), spec.channels);
    let empty = || Spectrogram::new(Array3::zeros((t_len, f_len, m)), spec.frame_len, spec.hop, spec.sample_rate);
    let mut early = empty()?;
    let mut late = empty()?;
    let mut noise = empty()?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut atf = Vec::with_capacity(f_len);
    let mut source = Array2::<C64>::zeros((t_len, f_len));
    for k in 0..f_len {
        let a = match &spec.atf {
            AtfRecipe::Random => random_atf(&mut rng, spec.atf_len, m),
            AtfRecipe::Explicit(list) => list[k].clone(),
        };
        let var = variance_profile(&mut rng, t_len, spec.source);
        for t in 0..t_len {
            source[[t, k]] = complex_normal(&mut rng, var[t]);
        }
        atf.push(a);
    }
    fill_images(t_len, &source, &atf, spec.delay, &mut early, &mut late);

    if spec.snr_db.is_finite() {
        let image_power = (&early.bins + &late.bins).iter().map(|v| v.norm_sqr()).sum::<f64>() / (t_len * f_len * m) as f64;
        let noise_var = image_power * 10f64.powf(-spec.snr_db / 10.0);
        noise.bins.mapv_inplace(|_| complex_normal(&mut rng, noise_var));
    } else if spec.snr_db < 0.0 {
        return Err(Error::InvalidScene("SNR of -inf leaves no signal".into()));
    }

    let mut atf0 = Vec::with_capacity(f_len);
    let mut rtf = Vec::with_capacity(f_len);
    for a in &atf {
        let direct = a.row(0).transpose();
        let pivot = direct[0];
        if pivot.norm() == 0.0 {
            return Err(Error::InvalidScene("reference channel of the direct tap is zero".into()));
        }
        let mut r = &direct / pivot;
        r[0] = C64::new(1.0, 0.0);
        atf0.push(direct);
        rtf.push(r);
    }

    let mut truth = SceneTruth {
        observation: empty()?,
        source,
        early,
        late,
        noise,
        atf,
        atf0,
        rtf,
        oracle_mask: Array2::zeros((t_len, f_len)),
        noise_frames: Vec::new(),
        delay: spec.delay,
    };
    truth.assemble();
    Ok(truth)
}

/// Frame count covering `ms` milliseconds at the scene's hop.
pub fn frames_for_ms(ms: f64, sample_rate: u32, hop: usize) -> usize {
    (ms * sample_rate as f64 / (1000.0 * hop as f64)).round() as usize
}

/// Gates the source so that the leading and trailing frames carry noise only,
/// and records those frames in `noise_frames`.
///
/// The source is silenced early enough before the tail that the
/// reverberation has died out by its first frame.
pub fn noise_only_padding(truth: &SceneTruth, head_ms: f64, tail_ms: f64) -> Result<SceneTruth> {
    if !(head_ms >= 0.0 && tail_ms >= 0.0) || !head_ms.is_finite() || !tail_ms.is_finite() {
        return Err(Error::InvalidScene("padding must be finite and non-negative".into()));
    }
    let obs = &truth.observation;
    let t_len = obs.frames();
    let head = frames_for_ms(head_ms, obs.sample_rate, obs.hop);
    let tail = frames_for_ms(tail_ms, obs.sample_rate, obs.hop);
    if head + tail > t_len {
        return Err(Error::PaddingTooLong);
    }
    let mut out = truth.clone();
    if head == 0 && tail == 0 {
        out.noise_frames.clear();
        return Ok(out);
    }
    let atf_len = truth.atf.first().map_or(1, |a| a.nrows());
    let silent_from = if tail > 0 { (t_len - tail).saturating_sub(atf_len - 1) } else { t_len };
    for t in (0..head).chain(silent_from..t_len) {
        out.source.row_mut(t).fill(C64::new(0.0, 0.0));
    }
    fill_images(t_len, &out.source, &truth.atf, truth.delay, &mut out.early, &mut out.late);
    out.assemble();
    out.noise_frames = (0..head).chain(t_len - tail..t_len).collect();
    Ok(out)
}
