//! Oracle metrics computed in the STFT domain against scene ground truth.

use std::collections::BTreeMap;

use super::RunReport;
use crate::error::{Error, Result};
use crate::scene::SceneTruth;
use crate::tfspace::Spectrogram;
use crate::C64;

/// Magnitude cap for ratios that would otherwise be infinite.
pub const DB_CAP: f64 = 300.0;

fn db(num: f64, den: f64) -> f64 {
    if num == 0.0 && den == 0.0 {
        return 0.0;
    }
    (10.0 * (num / den).log10()).clamp(-DB_CAP, DB_CAP)
}

/// Per-channel-0 component energies of an enhanced output.
///
/// `image` and `noise` are the enhancement filter applied to the noise-free
/// image and to the noise alone; `z == image + noise` for a linear filter.
pub fn evaluate(truth: &SceneTruth, reference: usize, z: &Spectrogram, image: &Spectrogram, noise: &Spectrogram) -> BTreeMap<String, f64> {
    let (t_len, f_len) = (truth.observation.frames(), truth.observation.num_bins());
    let mut desired = 0.0;
    let mut error = 0.0;
    let mut input_error = 0.0;
    let mut late_in = 0.0;
    let mut late_out = 0.0;
    let mut noise_in = 0.0;
    let mut noise_out = 0.0;
    for t in 0..t_len {
        for k in 0..f_len {
            let d = truth.early.bins[[t, k, reference]];
            desired += d.norm_sqr();
            error += (z.bins[[t, k, 0]] - d).norm_sqr();
            input_error += (truth.observation.bins[[t, k, reference]] - d).norm_sqr();
            late_in += truth.late.bins[[t, k, reference]].norm_sqr();
            late_out += (image.bins[[t, k, 0]] - d).norm_sqr();
            noise_in += truth.noise.bins[[t, k, reference]].norm_sqr();
            noise_out += noise.bins[[t, k, 0]].norm_sqr();
        }
    }
    let snr = db(desired, error);
    let input_snr = db(desired, input_error);
    BTreeMap::from([
        ("snr_db".to_string(), snr),
        ("input_snr_db".to_string(), input_snr),
        ("snr_gain_db".to_string(), snr - input_snr),
        ("late_reverb_ratio_db".to_string(), db(late_out, late_in)),
        ("noise_ratio_db".to_string(), db(noise_out, noise_in)),
    ])
}

/// Applies the report's per-bin filters to a multichannel spectrogram.
pub fn filter_spectrogram(report: &RunReport, input: &Spectrogram) -> Result<Spectrogram> {
    if report.filters.len() != input.num_bins() {
        return Err(Error::Dimension { expected: report.filters.len(), got: input.num_bins() });
    }
    let mut out = Spectrogram::zeros(input.frames(), 1, input.frame_len, input.hop, input.sample_rate)?;
    for (k, filter) in report.filters.iter().enumerate() {
        let z: Vec<C64> = filter.apply(&input.bin_frames(k))?;
        for (t, v) in z.into_iter().enumerate() {
            out.bins[[t, k, 0]] = v;
        }
    }
    Ok(out)
}

/// Output SNR against the early reference-channel signal, residual late
/// reverberation and residual noise, all in dB.
pub fn metrics(truth: &SceneTruth, report: &RunReport) -> Result<BTreeMap<String, f64>> {
    if !truth.observation.same_grid(&report.enhanced) {
        return Err(Error::Metadata("report and scene grids differ".into()));
    }
    let image = filter_spectrogram(report, &truth.image())?;
    let noise = filter_spectrogram(report, &truth.noise)?;
    Ok(evaluate(truth, report.reference_channel, &report.enhanced, &image, &noise))
}
