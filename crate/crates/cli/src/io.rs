//! WAV and mask file I/O.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use convbf::WaveBlock;
use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use ndarray::Array2;

use crate::error::{CliError, CliResult};

/// Reads 16/24/32-bit PCM or 32-bit float WAV into `samples x channels`,
/// with PCM scaled to `[-1, 1)`.
pub fn read_wav(path: &Path) -> CliResult<WaveBlock> {
    let bad = |e: &dyn std::fmt::Display| CliError::Input(format!("{}: {e}", path.display()));
    let reader = WavReader::open(path).map_err(|e| bad(&e))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => {
            reader.into_samples::<f32>().map(|s| s.map(f64::from)).collect::<Result<_, _>>().map_err(|e| bad(&e))?
        }
        (SampleFormat::Int, bits @ (16 | 24 | 32)) => {
            let scale = 1.0 / (1u64 << (bits - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<Result<_, _>>()
                .map_err(|e| bad(&e))?
        }
        (format, bits) => return Err(bad(&format!("unsupported sample format {format:?} with {bits} bits"))),
    };
    if channels == 0 || interleaved.is_empty() || !interleaved.len().is_multiple_of(channels) {
        return Err(bad(&"no complete sample frames"));
    }
    let samples = Array2::from_shape_vec((interleaved.len() / channels, channels), interleaved).map_err(|e| bad(&e))?;
    WaveBlock::new(samples, spec.sample_rate).map_err(|e| bad(&e))
}

/// Writes one channel as 32-bit float WAV.
pub fn write_wav_mono(path: &Path, samples: &[f64], sample_rate: u32) -> CliResult<()> {
    let bad = |e: hound::Error| CliError::Output(format!("{}: {e}", path.display()));
    let spec = WavSpec { channels: 1, sample_rate, bits_per_sample: 32, sample_format: SampleFormat::Float };
    let mut w = WavWriter::create(path, spec).map_err(bad)?;
    for &s in samples {
        w.write_sample(s as f32).map_err(bad)?;
    }
    w.finalize().map_err(bad)
}

pub const MASK_MAGIC: &[u8; 8] = b"CONVBFM1";

/// Mask file: 8-byte magic, little-endian `u32` frame and bin counts, then
/// `frames * bins` little-endian `f32` values, frame-major.
pub fn write_mask(path: &Path, mask: &Array2<f64>) -> CliResult<()> {
    let bad = |e: std::io::Error| CliError::Output(format!("{}: {e}", path.display()));
    let (t, f) = mask.dim();
    let mut w = BufWriter::new(File::create(path).map_err(bad)?);
    w.write_all(MASK_MAGIC).map_err(bad)?;
    w.write_all(&(t as u32).to_le_bytes()).map_err(bad)?;
    w.write_all(&(f as u32).to_le_bytes()).map_err(bad)?;
    for &v in mask.iter() {
        w.write_all(&(v as f32).to_le_bytes()).map_err(bad)?;
    }
    w.flush().map_err(bad)
}

pub fn read_mask(path: &Path) -> CliResult<Array2<f64>> {
    let bad = |e: &dyn std::fmt::Display| CliError::Input(format!("{}: {e}", path.display()));
    let mut bytes = Vec::new();
    BufReader::new(File::open(path).map_err(|e| bad(&e))?).read_to_end(&mut bytes).map_err(|e| bad(&e))?;
    if bytes.len() < 16 || &bytes[..8] != MASK_MAGIC {
        return Err(bad(&"not a mask file"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes")) as usize;
    let (t, f) = (word(8), word(12));
    let body = &bytes[16..];
    if t.checked_mul(f).and_then(|n| n.checked_mul(4)) != Some(body.len()) {
        return Err(bad(&format!("mask header says {t}x{f} but holds {} bytes", body.len())));
    }
    let values = body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64).collect();
    Array2::from_shape_vec((t, f), values).map_err(|e| bad(&e))
}
