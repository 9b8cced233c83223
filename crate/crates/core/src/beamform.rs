//! Distortionless beamformers: the stacked WPD solution and the
//! non-convolutional wMPDR, MPDR and MVDR solutions.
//!
//! Every closed form is `R^{-1} v / (v^H R^{-1} v)`, evaluated with one
//! Hermitian solve. They differ only in which covariance is used.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{herm_solve, HermMatrix};
use crate::stats::CovarianceSet;
use crate::{CMatrix, CVector, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightKind {
    Wmpdr,
    Mpdr,
    Mvdr,
    Wpd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamWeights {
    pub w: CVector,
    pub kind: WeightKind,
}

impl BeamWeights {
    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    /// `w^H v - 1`, the distortionless residual.
    pub fn constraint_error(&self, constraint: &CVector) -> f64 {
        ((self.w.adjoint() * constraint)[(0, 0)] - C64::new(1.0, 0.0)).norm()
    }
}

/// Maximum tolerated `|Im| / |Re|` of the constraint energy, which is
/// analytically real.
const CONSTRAINT_IMAG_RATIO: f64 = 1e-8;

/// `R^{-1} v / (v^H R^{-1} v)`.
pub fn distortionless(r: &HermMatrix, constraint: &CVector, loading: f64) -> Result<CVector> {
    check_dim(r.dim(), constraint.len())?;
    let rhs = CMatrix::from_column_slice(constraint.len(), 1, constraint.as_slice());
    let x = herm_solve(r, &rhs, loading)?;
    let x = CVector::from_column_slice(x.as_slice());
    let energy = constraint.dotc(&x);
    if !(energy.re > 0.0) || energy.im.abs() > CONSTRAINT_IMAG_RATIO * energy.re.abs() {
        return Err(Error::InvalidConstraintEnergy);
    }
    Ok(x / C64::new(energy.re, 0.0))
}

/// `[v; 0]` extended to the stacked dimension.
pub fn stacked_constraint(rtf: &CVector, dim: usize) -> Result<CVector> {
    if rtf.len() > dim {
        return Err(Error::Dimension { expected: dim, got: rtf.len() });
    }
    let mut v = CVector::zeros(dim);
    v.rows_mut(0, rtf.len()).copy_from(rtf);
    Ok(v)
}

/// Unified WPD convolutional beamformer on the stacked covariance.
pub fn solve_wpd(cov: &CovarianceSet, rtf: &CVector, loading: f64) -> Result<BeamWeights> {
    check_dim(cov.channels, rtf.len())?;
    let vbar = stacked_constraint(rtf, cov.dim())?;
    Ok(BeamWeights { w: distortionless(&cov.rbar, &vbar, loading)?, kind: WeightKind::Wpd })
}

/// wMPDR on the power-weighted dereverberated covariance.
pub fn solve_wmpdr(rd: &HermMatrix, rtf: &CVector, loading: f64) -> Result<BeamWeights> {
    Ok(BeamWeights { w: distortionless(rd, rtf, loading)?, kind: WeightKind::Wmpdr })
}

/// MPDR on an unweighted observation covariance.
pub fn solve_mpdr(ry: &HermMatrix, rtf: &CVector, loading: f64) -> Result<BeamWeights> {
    Ok(BeamWeights { w: distortionless(ry, rtf, loading)?, kind: WeightKind::Mpdr })
}

/// MVDR on a noise covariance.
pub fn solve_mvdr(rn: &HermMatrix, rtf: &CVector, loading: f64) -> Result<BeamWeights> {
    Ok(BeamWeights { w: distortionless(rn, rtf, loading)?, kind: WeightKind::Mvdr })
}

/// `z_t = w^H x_t` for every column of `frames`.
pub fn apply_weights(w: &BeamWeights, frames: &CMatrix) -> Result<Vec<C64>> {
    apply_vector(&w.w, frames)
}

pub fn apply_vector(w: &CVector, frames: &CMatrix) -> Result<Vec<C64>> {
    check_dim(w.len(), frames.nrows())?;
    Ok(frames.column_iter().map(|col| w.dotc(&col)).collect())
}
