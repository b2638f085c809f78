//! Dense kernels shared by the smoother, the LASSO reduction and the Gibbs
//! sampler. Storage is `nalgebra`; Cholesky and symmetric eigensolves are
//! run through `faer` on borrowed column-major views.

use faer::linalg::triangular_solve::{solve_lower_triangular_in_place, solve_upper_triangular_in_place};
use faer::{Mat, MatMut, MatRef, Par, Side};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Relative diagonal jitter (times `trace / n`) applied when a factorization
/// of a nominally positive (semi)definite matrix fails.
pub const JITTER_SCALE: f64 = 1e-10;

pub(crate) fn view<T: Real>(m: &DMatrix<T>) -> MatRef<'_, T> {
    MatRef::from_column_major_slice(m.as_slice(), m.nrows(), m.ncols())
}

fn col_mut<T: Real>(v: &mut DVector<T>) -> MatMut<'_, T> {
    let n = v.len();
    MatMut::from_column_major_slice_mut(v.as_mut_slice(), n, 1)
}

fn mat_mut<T: Real>(m: &mut DMatrix<T>) -> MatMut<'_, T> {
    let (r, c) = m.shape();
    MatMut::from_column_major_slice_mut(m.as_mut_slice(), r, c)
}

/// Lower Cholesky factor `A = L L'` with the crate-wide jitter policy.
#[derive(Debug, Clone)]
pub struct Cholesky<T: Real> {
    l: Mat<T>,
    jitter: T,
}

impl<T: Real> Cholesky<T> {
    /// Factors `a`. On failure a diagonal jitter of `1e-10 * trace / n` is
    /// added once and the event is logged; a second failure is an error.
    pub fn factor(a: &DMatrix<T>, what: &'static str) -> Result<Self> {
        let n = a.nrows();
        if n != a.ncols() {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: a.ncols(),
            });
        }
        match view(a).llt(Side::Lower) {
            Ok(llt) => Ok(Self {
                l: llt.L().to_owned(),
                jitter: T::zero(),
            }),
            Err(_) => {
                let trace = a.trace();
                let mut jitter = T::lit(JITTER_SCALE) * trace / T::from_count(n.max(1));
                if !(jitter > T::zero()) {
                    jitter = T::lit(JITTER_SCALE);
                }
                log::warn!(
                    "cholesky of {what} failed; retrying with diagonal jitter {:e}",
                    jitter.as_f64()
                );
                let mut shifted = a.clone();
                for i in 0..n {
                    shifted[(i, i)] += jitter;
                }
                match view(&shifted).llt(Side::Lower) {
                    Ok(llt) => Ok(Self {
                        l: llt.L().to_owned(),
                        jitter,
                    }),
                    Err(faer::linalg::cholesky::llt::factor::LltError::NonPositivePivot { index }) => {
                        Err(Error::NotPositiveDefinite { what, pivot: index })
                    }
                }
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// Diagonal shift that was needed, zero if none.
    pub fn jitter(&self) -> T {
        self.jitter
    }

    pub fn lower(&self) -> DMatrix<T> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, j| if i >= j { self.l[(i, j)] } else { T::zero() })
    }

    /// `b <- L^{-1} b`
    pub fn solve_lower_in_place(&self, b: &mut DVector<T>) {
        solve_lower_triangular_in_place(self.l.as_ref(), col_mut(b), Par::Seq);
    }

    /// `b <- L'^{-1} b`
    pub fn solve_upper_in_place(&self, b: &mut DVector<T>) {
        solve_upper_triangular_in_place(self.l.as_ref().transpose(), col_mut(b), Par::Seq);
    }

    /// `b <- A^{-1} b`
    pub fn solve_in_place(&self, b: &mut DVector<T>) {
        self.solve_lower_in_place(b);
        self.solve_upper_in_place(b);
    }

    pub fn solve(&self, b: &DVector<T>) -> DVector<T> {
        let mut x = b.clone();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_matrix(&self, b: &DMatrix<T>) -> DMatrix<T> {
        let mut x = b.clone();
        let l = self.l.as_ref();
        solve_lower_triangular_in_place(l, mat_mut(&mut x), Par::Seq);
        solve_upper_triangular_in_place(l.transpose(), mat_mut(&mut x), Par::Seq);
        x
    }

    pub fn inverse(&self) -> DMatrix<T> {
        let n = self.dim();
        let inv = self.solve_matrix(&DMatrix::identity(n, n));
        (&inv + inv.transpose()) * T::lit(0.5)
    }

    /// `v' A^{-1} v`
    pub fn inv_quad(&self, v: &DVector<T>) -> T {
        let mut w = v.clone();
        self.solve_lower_in_place(&mut w);
        w.norm_squared()
    }

    /// Draws from `N(A^{-1} b, scale^2 A^{-1})` given standard normal `z`.
    ///
    /// The mean is `L'^{-1} L^{-1} b`; the fluctuation `L'^{-1} z` has
    /// covariance `A^{-1}`.
    pub fn sample_with_precision(&self, b: &DVector<T>, mut z: DVector<T>, scale: T) -> DVector<T> {
        let mut mean = b.clone();
        self.solve_lower_in_place(&mut mean);
        mean.axpy(scale, &z, T::one());
        // L' x = w + scale z  =>  x = mean + scale L'^{-1} z
        z.copy_from(&mean);
        self.solve_upper_in_place(&mut z);
        z
    }
}

/// Symmetric eigendecomposition, eigenvalues ascending.
pub fn sym_eigen<T: Real>(a: &DMatrix<T>, what: &'static str) -> Result<(DVector<T>, DMatrix<T>)> {
    let n = a.nrows();
    let evd = view(a)
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| Error::EigenFailure(what))?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let vals = DVector::from_fn(n, |i, _| s[i]);
    let vecs = DMatrix::from_fn(n, n, |i, j| u[(i, j)]);
    Ok((vals, vecs))
}

/// `U diag(d) U'` for a symmetric spectral form.
pub fn spectral_apply<T: Real>(vecs: &DMatrix<T>, diag: &DVector<T>) -> DMatrix<T> {
    let mut scaled = vecs.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= diag[j];
    }
    &scaled * vecs.transpose()
}

/// Largest eigenvalue of a symmetric positive semidefinite matrix by power
/// iteration, stopping when the Rayleigh quotient changes by less than `tol`
/// relative.
pub fn power_iteration<T: Real>(a: &DMatrix<T>, tol: T, max_iter: usize) -> T {
    let n = a.nrows();
    if n == 0 {
        return T::zero();
    }
    let mut v = DVector::from_element(n, T::one() / T::from_count(n).sqrt());
    // a deterministic, non-symmetric start avoids orthogonality to the top
    // eigenvector on structured inputs
    for (i, x) in v.iter_mut().enumerate() {
        *x += T::lit(1e-3) * T::from_count(i % 7);
    }
    v.normalize_mut();
    let mut rayleigh = T::zero();
    let mut w = DVector::zeros(n);
    for _ in 0..max_iter {
        w.gemv(T::one(), a, &v, T::zero());
        let next = v.dot(&w);
        let norm = w.norm();
        if norm == T::zero() {
            return T::zero();
        }
        v.copy_from(&w);
        v /= norm;
        if (next - rayleigh).abs() <= tol * next.abs() {
            return next;
        }
        rayleigh = next;
    }
    rayleigh
}

/// Ordinary least squares projection `X (X'X)^{-1} X'` for a thin `X`.
pub fn projection<T: Real>(x: &DMatrix<T>) -> Result<DMatrix<T>> {
    let xtx = x.transpose() * x;
    let chol = Cholesky::factor(&xtx, "X'X")?;
    if chol.jitter() > T::zero() {
        return Err(Error::InvalidInput("X is rank deficient".into()));
    }
    let inv_xt = chol.solve_matrix(&x.transpose());
    Ok(x * inv_xt)
}
