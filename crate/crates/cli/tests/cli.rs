use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use convbf_cli::io::{read_wav, write_mask};
use hound::{SampleFormat, WavSpec, WavWriter};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn convbf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_convbf")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// A reverberant noisy recording: one white source, a decaying random
/// impulse response per channel, and sensor noise. Silent for the first and
/// last `pad` samples apart from the noise.
fn recording(channels: usize, samples: usize, pad: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let source: Vec<f64> =
        (0..samples).map(|i| if i < pad || i + pad + 2000 >= samples { 0.0 } else { rng.random::<f64>() - 0.5 }).collect();
    let mut out = Array2::zeros((samples, channels));
    for ch in 0..channels {
        let h: Vec<f64> = (0..1600).map(|k| (rng.random::<f64>() - 0.5) * (-(k as f64) / 300.0).exp()).collect();
        for (i, &s) in source.iter().enumerate().filter(|(_, s)| **s != 0.0) {
            for (k, &hk) in h.iter().enumerate() {
                if i + k < samples {
                    out[[i + k, ch]] += s * hk;
                }
            }
        }
        for i in 0..samples {
            out[[i, ch]] = out[[i, ch]] * 0.2 + (rng.random::<f64>() - 0.5) * 0.002;
        }
    }
    out
}

fn write_f32(path: &Path, x: &Array2<f64>, rate: u32) {
    let spec = WavSpec { channels: x.ncols() as u16, sample_rate: rate, bits_per_sample: 32, sample_format: SampleFormat::Float };
    let mut w = WavWriter::create(path, spec).unwrap();
    for row in x.rows() {
        for &v in row {
            w.write_sample(v as f32).unwrap();
        }
    }
    w.finalize().unwrap();
}

fn tmp(dir: &tempfile::TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

#[test]
fn obs_passthrough_reproduces_reference_channel() {
    let dir = tempfile::tempdir().unwrap();
    let (input, output) = (tmp(&dir, "in.wav"), tmp(&dir, "out.wav"));
    let x = recording(2, 8000, 500, 1);
    write_f32(&input, &x, 16000);
    let o = convbf(&["enhance", input.to_str().unwrap(), "-o", output.to_str().unwrap(), "--method", "obs", "--ref-channel", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let y = read_wav(&output).unwrap();
    assert_eq!(y.samples.dim(), (8000, 1));
    let reference = read_wav(&input).unwrap();
    // The STFT round trip is exact away from the first and last frame.
    let err = (512..8000 - 512).map(|i| (y.samples[[i, 0]] - reference.samples[[i, 1]]).abs()).fold(0.0, f64::max);
    assert!(err <= 1e-7, "{err}");
}

#[test]
fn six_channel_joint_enhancement_writes_mono_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let (input, output, json) = (tmp(&dir, "in.wav"), tmp(&dir, "out.wav"), tmp(&dir, "r.json"));
    write_f32(&input, &recording(6, 24000, 4000, 2), 16000);
    let o = convbf(&[
        "enhance",
        input.to_str().unwrap(),
        "-o",
        output.to_str().unwrap(),
        "--method",
        "wpe_wmpdr_joint",
        "--b",
        "4",
        "--lw",
        "7",
        "--noise-head-ms",
        "200",
        "--noise-tail-ms",
        "100",
        "--json-out",
        json.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let y = read_wav(&output).unwrap();
    assert_eq!(y.samples.dim(), (24000, 1));
    assert!(y.samples.iter().all(|v| v.is_finite()));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(report["config"]["pipeline"]["method"], "wpe+wmpdr");
    assert_eq!(report["config"]["pipeline"]["delay"], 4);
    assert_eq!(report["config"]["lw"], "7");
    assert_eq!(report["input"]["channels"], 6);
    assert_eq!(report["report"]["failed_bins"].as_array().unwrap().len(), 0);
}

#[test]
fn mask_source_and_grid_check() {
    let dir = tempfile::tempdir().unwrap();
    let (input, output, mask) = (tmp(&dir, "in.wav"), tmp(&dir, "out.wav"), tmp(&dir, "m.bin"));
    write_f32(&input, &recording(3, 6400, 800, 3), 16000);
    // 6400 samples at hop 128 give 50 frames of 257 bins.
    write_mask(&mask, &Array2::from_shape_fn((50, 257), |(t, _)| if (8..40).contains(&t) { 0.9 } else { 0.1 })).unwrap();
    let o = convbf(&["enhance", input.to_str().unwrap(), "-o", output.to_str().unwrap(), "--mask", mask.to_str().unwrap(), "--lw", "6"]);
    assert!(o.status.success(), "{}", stderr(&o));
    write_mask(&mask, &Array2::from_elem((49, 257), 0.5)).unwrap();
    let o = convbf(&["enhance", input.to_str().unwrap(), "-o", output.to_str().unwrap(), "--mask", mask.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("invalid config"));
}

#[test]
fn corrupted_header_is_unreadable_input() {
    let dir = tempfile::tempdir().unwrap();
    let input = tmp(&dir, "bad.wav");
    std::fs::write(&input, b"RIFF\x10\x00\x00\x00WAVEjunkjunkjunk").unwrap();
    let o = convbf(&["enhance", input.to_str().unwrap(), "-o", tmp(&dir, "o.wav").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let line: serde_json::Value = serde_json::from_str(stderr(&o).trim()).unwrap();
    assert_eq!(line["error"], "unreadable input");
}

#[test]
fn steering_methods_need_a_source() {
    let dir = tempfile::tempdir().unwrap();
    let input = tmp(&dir, "in.wav");
    write_f32(&input, &recording(2, 4000, 400, 4), 16000);
    let o = convbf(&["enhance", input.to_str().unwrap(), "-o", tmp(&dir, "o.wav").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--mask"));
}

#[test]
fn equivalence_passes_and_strict_tolerance_fails() {
    let o = convbf(&["equiv-check", "--seed", "7", "--channels", "2", "--b", "2", "--lw", "4"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let line = stdout(&o);
    assert!(line.contains("PASS"));
    let diff: f64 = line.split_whitespace().next().unwrap().trim_start_matches("max_rel_diff=").parse().unwrap();
    assert!(diff <= 1e-9);
    let o = convbf(&["equiv-check", "--seed", "7", "--channels", "2", "--b", "2", "--lw", "4", "--tol", "1e-15"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn equivalence_on_recorded_input() {
    let dir = tempfile::tempdir().unwrap();
    let input = tmp(&dir, "in.wav");
    write_f32(&input, &recording(2, 16000, 3200, 5), 16000);
    let o = convbf(&["equiv-check", "--input", input.to_str().unwrap(), "--b", "2", "--lw", "4", "--noise-head-ms", "200"]);
    assert_eq!(o.status.code(), Some(0), "{} {}", stdout(&o), stderr(&o));
}

#[test]
fn single_channel_equivalence_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let input = tmp(&dir, "mono.wav");
    write_f32(&input, &recording(1, 4000, 400, 6), 16000);
    let o = convbf(&["equiv-check", "--input", input.to_str().unwrap(), "--noise-head-ms", "20"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("need ≥2 channels"));
}

#[test]
fn bench_is_deterministic_and_complete() {
    let dir = tempfile::tempdir().unwrap();
    let run = |tag: &str, threads: &str| {
        let (json, csv) = (tmp(&dir, &format!("{tag}.json")), tmp(&dir, &format!("{tag}.csv")));
        let o = Command::new(env!("CARGO_BIN_EXE_convbf"))
            .env("CONVBF_THREADS", threads)
            .args(["bench", "--seeds", "3", "--b", "1", "--lw", "5", "--frames", "200", "--max-iters", "3"])
            .args(["--json-out", json.to_str().unwrap(), "--csv-out", csv.to_str().unwrap()])
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", stderr(&o));
        (std::fs::read(json).unwrap(), std::fs::read(csv).unwrap(), o.stdout)
    };
    let a = run("a", "1");
    let b = run("b", "3");
    assert_eq!(a, b);
    let table: serde_json::Value = serde_json::from_slice(&a.0).unwrap();
    for m in ["obs", "mpdr", "mvdr", "wmpdr", "wpe", "wpe+mpdr", "wpe+wmpdr"] {
        assert!(table["table"][m]["metrics"]["snr_db"]["mean"].is_f64(), "{m}");
    }
    for scheme in ["wpe+wmpdr", "wpe+wmpdr:separate"] {
        let curve = table["iteration_sweep"][scheme].as_array().unwrap();
        assert_eq!(curve.len(), 3);
        assert!(curve.iter().all(|p| p["snr_db"]["mean"].as_f64().unwrap().is_finite()));
    }
    // Header plus 2 schemes x 3 iterations x 3 seeds.
    assert_eq!(String::from_utf8(a.1).unwrap().lines().count(), 1 + 18);
}

#[test]
fn config_file_is_applied_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, json) = (tmp(&dir, "c.ini"), tmp(&dir, "e.json"));
    std::fs::write(&cfg, "[pipeline]\nb = 3\nlw = 5\n[scene]\nchannels = 3\nframes = 150\n").unwrap();
    let o = convbf(&["equiv-check", "--config", cfg.to_str().unwrap(), "--lw", "6", "--json-out", json.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(v["config"]["pipeline"]["delay"], 3);
    assert_eq!(v["config"]["lw"], "6");
    assert_eq!(v["scene"]["channels"], 3);
    assert_eq!(v["config"]["pipeline"]["loading"], 0.0);
}

#[test]
fn bad_thread_count_is_a_config_error() {
    let o = Command::new(env!("CARGO_BIN_EXE_convbf")).env("CONVBF_THREADS", "zero").args(["equiv-check"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}
