//! MIMO weighted prediction error dereverberation.
//!
//! The full dereverberation matrix is `[I_M; -G]` where `G` predicts the late
//! reverberation of the current frame from the delayed past. Only `G` is
//! stored.

use crate::error::{check_dim, Error, Result};
use crate::linalg::herm_solve;
use crate::stats::{CovarianceSet, StackLayout};
use crate::{CMatrix, C64};

#[derive(Debug, Clone, PartialEq)]
pub struct DereverbFilter {
    /// Prediction matrix, `(D - M) x M`.
    pub gtilde: CMatrix,
    pub layout: StackLayout,
}

impl DereverbFilter {
    /// The pass-through filter `G = 0`.
    pub fn identity(layout: StackLayout) -> Self {
        DereverbFilter { gtilde: CMatrix::zeros(layout.past_dim(), layout.channels), layout }
    }

    /// The full `D x M` matrix `[I_M; -G]`.
    pub fn stacked_matrix(&self) -> CMatrix {
        let (d, m) = (self.layout.dim(), self.layout.channels);
        let mut g = CMatrix::zeros(d, m);
        for i in 0..m {
            g[(i, i)] = C64::new(1.0, 0.0);
        }
        g.view_mut((m, 0), (d - m, m)).copy_from(&(-&self.gtilde));
        g
    }
}

/// Solves `(Rtilde + loading) G = P`, the q-independent stationary point of
/// the likelihood in `G`.
pub fn fit_wpe(cov: &CovarianceSet, layout: StackLayout, loading: f64) -> Result<DereverbFilter> {
    check_dim(layout.dim(), cov.dim())?;
    check_dim(layout.channels, cov.channels)?;
    if layout.past_dim() == 0 {
        return Ok(DereverbFilter::identity(layout));
    }
    let gtilde = herm_solve(&cov.rtilde, &cov.p, loading).map_err(|e| match e {
        Error::Numeric(_) => Error::SingularPastCovariance,
        other => other,
    })?;
    Ok(DereverbFilter { gtilde, layout })
}

/// `d_t = y_t - G^H ytilde_t` for every column of the stacked matrix.
pub fn apply_wpe(filter: &DereverbFilter, stacked: &CMatrix) -> Result<CMatrix> {
    check_dim(filter.layout.dim(), stacked.nrows())?;
    let m = filter.layout.channels;
    let current = stacked.rows(0, m).into_owned();
    if filter.layout.past_dim() == 0 {
        return Ok(current);
    }
    let past = stacked.rows(m, filter.layout.past_dim());
    Ok(current - filter.gtilde.adjoint() * past)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::HermMatrix;
    use crate::stats::{stack, weighted_covariance};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_c(rng: &mut ChaCha8Rng) -> C64 {
        C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
    }

    // Gauss-Jordan elimination with partial pivoting on [A | B].
    fn gauss_solve(a: &CMatrix, b: &CMatrix) -> CMatrix {
        let n = a.nrows();
        let k = b.ncols();
        let mut aug = CMatrix::zeros(n, n + k);
        aug.view_mut((0, 0), (n, n)).copy_from(a);
        aug.view_mut((0, n), (n, k)).copy_from(b);
        for col in 0..n {
            let pivot = (col..n).max_by(|&i, &j| aug[(i, col)].norm().total_cmp(&aug[(j, col)].norm())).unwrap();
            aug.swap_rows(col, pivot);
            let p = aug[(col, col)];
            for j in 0..n + k {
                aug[(col, j)] /= p;
            }
            for i in 0..n {
                if i != col {
                    let f = aug[(i, col)];
                    for j in 0..n + k {
                        let v = aug[(col, j)];
                        aug[(i, j)] -= f * v;
                    }
                }
            }
        }
        aug.view((0, n), (n, k)).into_owned()
    }

    #[test]
    fn zero_cross_covariance_gives_zero_filter() {
        let layout = StackLayout::new(2, 1, 2).unwrap();
        let cov = CovarianceSet::from_rbar(HermMatrix::identity(4), 2, 1).unwrap();
        let f = fit_wpe(&cov, layout, 0.0).unwrap();
        assert_eq!(f.gtilde, CMatrix::zeros(2, 2));
    }

    #[test]
    fn matches_dense_elimination() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let layout = StackLayout::new(2, 1, 3).unwrap();
        let g = CMatrix::from_fn(6, 9, |_, _| rand_c(&mut rng));
        let rbar = HermMatrix::new(&g * g.adjoint()).unwrap();
        let cov = CovarianceSet::from_rbar(rbar, 2, 9).unwrap();
        let f = fit_wpe(&cov, layout, 0.0).unwrap();
        let oracle = gauss_solve(cov.rtilde.as_matrix(), &cov.p);
        assert!((&f.gtilde - &oracle).norm() / oracle.norm() < 1e-11);
    }

    #[test]
    fn identity_filter_passes_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let layout = StackLayout::new(3, 2, 4).unwrap();
        let y = CMatrix::from_fn(3, 10, |_, _| rand_c(&mut rng));
        let s = stack(&y, layout).unwrap();
        let d = apply_wpe(&DereverbFilter::identity(layout), &s).unwrap();
        assert_eq!(d, y);
    }

    #[test]
    fn single_frame_matches_expanded_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let layout = StackLayout::new(2, 1, 2).unwrap();
        let gtilde = CMatrix::from_fn(2, 2, |_, _| rand_c(&mut rng));
        let frame = CMatrix::from_fn(4, 1, |_, _| rand_c(&mut rng));
        let f = DereverbFilter { gtilde: gtilde.clone(), layout };
        let d = apply_wpe(&f, &frame).unwrap();
        for ch in 0..2 {
            let mut expect = frame[(ch, 0)];
            for r in 0..2 {
                expect -= gtilde[(r, ch)].conj() * frame[(2 + r, 0)];
            }
            assert!((d[(ch, 0)] - expect).norm() < 1e-15);
        }
        let via_g = f.stacked_matrix().adjoint() * &frame;
        assert!((via_g - d).norm() < 1e-15);
    }

    #[test]
    fn prediction_error_is_orthogonal_to_past() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let layout = StackLayout::new(2, 2, 5).unwrap();
        let y = CMatrix::from_fn(2, 300, |_, _| rand_c(&mut rng));
        let lambda: Vec<f64> = (0..300).map(|_| 0.2 + rng.random::<f64>()).collect();
        let s = stack(&y, layout).unwrap();
        let cov = weighted_covariance(&s, &lambda, 2).unwrap();
        let f = fit_wpe(&cov, layout, 0.0).unwrap();
        let d = apply_wpe(&f, &s).unwrap();
        let past = s.rows(2, layout.past_dim());
        let mut cross = CMatrix::zeros(layout.past_dim(), 2);
        for t in 0..300 {
            cross += past.column(t) * d.column(t).adjoint() / C64::new(300.0 * lambda[t], 0.0);
        }
        assert!(cross.norm() <= 1e-9 * cov.p.norm());
    }

    #[test]
    fn dimension_mismatch() {
        let layout = StackLayout::new(2, 1, 2).unwrap();
        let f = DereverbFilter::identity(layout);
        assert!(matches!(apply_wpe(&f, &CMatrix::zeros(3, 4)), Err(Error::Dimension { .. })));
    }
}
