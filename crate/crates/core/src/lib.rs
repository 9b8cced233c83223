//! Joint dereverberation and denoising of multichannel speech in the STFT
//! domain.
//!
//! The crate implements the maximum-likelihood convolutional beamformer
//! (WPD), its factorization into MIMO-WPE dereverberation followed by a
//! power-weighted MPDR beamformer (wMPDR), the conventional MPDR/MVDR
//! baselines, and a verifier that checks the unified and factorized
//! solutions agree numerically.
//!
//! All per-bin processing works on `M x T` complex matrices whose columns are
//! the microphone vectors of successive frames.

// `!(x > 0.0)` is used on purpose so NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod beamform;
pub mod error;
pub mod linalg;
pub mod pipeline;
pub mod rtf;
pub mod scene;
pub mod stats;
pub mod tfspace;
pub mod wpe;

pub use error::{Error, Result};
pub use linalg::HermMatrix;
pub use pipeline::{Method, PipelineConfig, RtfSource, RunReport};
pub use scene::{SceneSpec, SceneTruth};
pub use tfspace::{Spectrogram, WaveBlock};

/// Complex sample type used throughout.
pub type C64 = num_complex::Complex64;
/// Dense complex matrix.
pub type CMatrix = nalgebra::DMatrix<C64>;
/// Dense complex column vector.
pub type CVector = nalgebra::DVector<C64>;
