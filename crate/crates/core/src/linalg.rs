//! Dense complex Hermitian kernels: loaded solves, eigendecomposition and
//! inverse square roots.
//!
//! Dimensions stay below about a hundred (`M <= 8`, `L_w <= 12`), so only
//! direct dense methods are used. Every solve checks its residual.

use nalgebra::SymmetricEigen;

use crate::error::{check_dim, Error, Result};
use crate::{CMatrix, C64};

const ASYMMETRY_REJECT: f64 = 1e-8;
const SOLVE_RESIDUAL: f64 = 1e-9;
const EIG_RESIDUAL: f64 = 1e-9;

/// A square complex matrix that is Hermitian up to rounding.
///
/// Construction symmetrizes the input as `(A + A^H) / 2`; inputs whose
/// relative asymmetry exceeds `1e-8` are rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct HermMatrix(CMatrix);

impl HermMatrix {
    pub fn new(m: CMatrix) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::Dimension { expected: m.nrows(), got: m.ncols() });
        }
        let asym = relative_asymmetry(&m);
        if asym > ASYMMETRY_REJECT {
            return Err(Error::NotHermitian(asym));
        }
        let mut h = m;
        symmetrize(&mut h);
        Ok(HermMatrix(h))
    }

    /// Wraps a matrix the caller built Hermitian entry by entry.
    pub(crate) fn from_hermitian_parts(m: CMatrix) -> Self {
        debug_assert!(relative_asymmetry(&m) == 0.0);
        HermMatrix(m)
    }

    pub fn identity(dim: usize) -> Self {
        HermMatrix(CMatrix::identity(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_inner(self) -> CMatrix {
        self.0
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.0[(i, i)].re).sum()
    }

    pub fn scaled(&self, c: f64) -> Self {
        HermMatrix(self.0.map(|x| x * c))
    }

    /// `A + loading * tr(A) / dim * I`.
    pub fn loaded(&self, loading: f64) -> CMatrix {
        let mut m = self.0.clone();
        let n = self.dim();
        if n > 0 && loading > 0.0 {
            let shift = loading * self.trace() / n as f64;
            for i in 0..n {
                m[(i, i)] += C64::new(shift, 0.0);
            }
        }
        m
    }
}

/// `||A - A^H||_F / ||A||_F`, zero for the zero matrix.
pub fn relative_asymmetry(m: &CMatrix) -> f64 {
    let norm = m.norm();
    if norm == 0.0 {
        return 0.0;
    }
    (m - m.adjoint()).norm() / norm
}

fn symmetrize(m: &mut CMatrix) {
    let n = m.nrows();
    for j in 0..n {
        m[(j, j)] = C64::new(m[(j, j)].re, 0.0);
        for i in (j + 1)..n {
            let avg = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = avg;
            m[(j, i)] = avg.conj();
        }
    }
}

/// Solves `(A + loading * tr(A)/dim * I) X = B`.
///
/// Cholesky is tried first, partial-pivot LU second. The residual must come
/// in at or below `1e-9 * ||B||_F`, after at most one refinement step.
pub fn herm_solve(a: &HermMatrix, b: &CMatrix, loading: f64) -> Result<CMatrix> {
    if !(loading >= 0.0 && loading.is_finite()) {
        return Err(Error::Config(format!("loading must be a finite non-negative number, got {loading}")));
    }
    check_dim(a.dim(), b.nrows())?;
    let m = a.loaded(loading);
    let tol = SOLVE_RESIDUAL * b.norm();
    // Complex Cholesky does not reject indefinite input, so its answer is
    // only trusted when the residual confirms it.
    let refine = |x: CMatrix, solve: &dyn Fn(&CMatrix) -> Option<CMatrix>| -> (CMatrix, CMatrix) {
        let mut x = x;
        let mut residual = &m * &x - b;
        if !(residual.norm() <= tol) {
            if let Some(dx) = solve(&residual) {
                x -= dx;
                residual = &m * &x - b;
            }
        }
        (x, residual)
    };
    let chol = m.clone().cholesky().filter(|ch| ch.l_dirty().diagonal().iter().all(|d| d.re > 0.0 && d.re.is_finite()));
    let mut best = None;
    if let Some(ch) = chol {
        let solve = |rhs: &CMatrix| Some(ch.solve(rhs));
        let (x, res) = refine(ch.solve(b), &solve);
        if res.norm() <= tol {
            best = Some((x, res));
        }
    }
    let (x, residual) = match best {
        Some(v) => v,
        None => {
            let lu = m.clone().lu();
            let solve = |rhs: &CMatrix| lu.solve(rhs);
            let x = solve(b).ok_or_else(|| Error::Numeric("singular system".into()))?;
            refine(x, &solve)
        }
    };
    let r = residual.norm();
    if !(r <= tol) || x.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::Numeric(format!("solve residual {r:.3e} exceeds {tol:.3e}")));
    }
    Ok(x)
}

/// Eigendecomposition of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct Eigen {
    /// Real eigenvalues in descending order.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors as columns, matching `values`.
    pub vectors: CMatrix,
}

/// Hermitian eigendecomposition with descending eigenvalues.
///
/// Each eigenvector is rotated so its largest-magnitude entry (the first one,
/// on ties) is real and positive.
pub fn herm_eig(a: &HermMatrix) -> Result<Eigen> {
    let n = a.dim();
    if n == 0 {
        return Ok(Eigen { values: Vec::new(), vectors: CMatrix::zeros(0, 0) });
    }
    let eig = SymmetricEigen::new(a.as_matrix().clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(src);
        let max = col.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let pivot = col
            .iter()
            .position(|c| c.norm() >= max * (1.0 - 1e-9))
            .unwrap_or(0);
        let phase = if max > 0.0 { col[pivot].conj() / col[pivot].norm() } else { C64::new(1.0, 0.0) };
        for i in 0..n {
            vectors[(i, dst)] = col[i] * phase;
        }
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite eigenvalue".into()));
    }
    let lambda = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        n,
        values.iter().map(|&v| C64::new(v, 0.0)),
    ));
    let scale = a.as_matrix().norm();
    let residual = (a.as_matrix() * &vectors - &vectors * lambda).norm();
    if residual > EIG_RESIDUAL * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::Numeric(format!("eigen residual {residual:.3e}")));
    }
    Ok(Eigen { values, vectors })
}

/// A whitening transform `W = A^{-1/2}` together with its inverse `A^{1/2}`.
#[derive(Debug, Clone)]
pub struct Whitening {
    pub forward: HermMatrix,
    pub inverse: HermMatrix,
    /// Number of eigenvalues raised to the floor.
    pub floored: usize,
}

/// Computes `A^{-1/2}` and `A^{1/2}` with eigenvalues floored at
/// `floor * max_eigenvalue`.
pub fn whitening(a: &HermMatrix, floor: f64) -> Result<Whitening> {
    let eig = herm_eig(a)?;
    let top = eig.values.first().copied().unwrap_or(0.0);
    if !(top > 0.0) {
        return Err(Error::Numeric("matrix has no positive eigenvalue".into()));
    }
    let min_allowed = floor.max(0.0) * top;
    let mut floored = 0;
    let clamped: Vec<f64> = eig
        .values
        .iter()
        .map(|&v| {
            if v < min_allowed {
                floored += 1;
                min_allowed
            } else {
                v
            }
        })
        .collect();
    if clamped.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Numeric("singular matrix cannot be whitened".into()));
    }
    let build = |f: &dyn Fn(f64) -> f64| -> HermMatrix {
        let n = a.dim();
        let mut out = CMatrix::zeros(n, n);
        for (k, &v) in clamped.iter().enumerate() {
            let col = eig.vectors.column(k);
            out += (col * col.adjoint()) * C64::new(f(v), 0.0);
        }
        let mut h = out;
        symmetrize(&mut h);
        HermMatrix(h)
    };
    Ok(Whitening {
        forward: build(&|v| 1.0 / v.sqrt()),
        inverse: build(&|v| v.sqrt()),
        floored,
    })
}

/// `A^{-1/2}` with eigenvalues floored at `floor * max_eigenvalue`.
pub fn inv_sqrt(a: &HermMatrix, floor: f64) -> Result<HermMatrix> {
    whitening(a, floor).map(|w| w.forward)
}
