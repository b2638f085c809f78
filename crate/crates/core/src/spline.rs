//! Cubic smoothing spline design and its Gaussian-process counterpart.
//!
//! The basis is the cardinal natural cubic spline basis with a knot at every
//! observation: `φ_k` is the natural spline interpolating the `k`-th unit
//! vector, so `Φ = I` and the roughness Gram matrix `R[j,k] = ∫ φ_j'' φ_k''`
//! is the classical `Q R_tri^{-1} Q'` penalty built from the banded
//! second-difference matrices. `R` is decomposed once at construction; every
//! smoother quantity for any `ω` is then a diagonal rescaling in that basis.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{projection, spectral_apply, sym_eigen, Cholesky};
use crate::scalar::Real;
use crate::timeseries::MIN_LEN;

/// Spline basis `Φ`, roughness penalty `R`, linear trend `X` and GP
/// covariance `K` on a standardized time grid.
#[derive(Debug, Clone)]
pub struct SplineDesign<T: Real> {
    pub phi: DMatrix<T>,
    pub r: DMatrix<T>,
    pub x: DMatrix<T>,
    pub k: DMatrix<T>,
    pub times: Vec<T>,
    /// Eigenvalues of `R`, ascending; the first two are exactly zero.
    eigvals: DVector<T>,
    /// Matching orthonormal eigenvectors; the first two span `col(X)`.
    eigvecs: DMatrix<T>,
}

/// Second-order reproducing kernel `∫₀¹ (s−u)₊ (t−u)₊ du = m²(3M − m)/6`.
pub fn gp_kernel<T: Real>(s: T, t: T) -> Result<T> {
    for v in [s, t] {
        if !(v >= T::zero() && v <= T::one()) {
            return Err(Error::OutOfRange {
                name: "kernel argument",
                value: v.as_f64(),
            });
        }
    }
    let (m, big) = if s < t { (s, t) } else { (t, s) };
    Ok(m * m * (T::lit(3.0) * big - m) / T::lit(6.0))
}

/// Green–Silverman `Q` (n × n−2) and tridiagonal `R_tri` (n−2 × n−2).
fn banded_penalty<T: Real>(times: &[T]) -> (DMatrix<T>, DMatrix<T>) {
    let n = times.len();
    let h: Vec<T> = times.windows(2).map(|w| w[1] - w[0]).collect();
    let mut q = DMatrix::zeros(n, n - 2);
    let mut r = DMatrix::zeros(n - 2, n - 2);
    let three = T::lit(3.0);
    let six = T::lit(6.0);
    for j in 1..n - 1 {
        let c = j - 1;
        q[(j - 1, c)] = T::one() / h[j - 1];
        q[(j, c)] = -T::one() / h[j - 1] - T::one() / h[j];
        q[(j + 1, c)] = T::one() / h[j];
        r[(c, c)] = (h[j - 1] + h[j]) / three;
        if c + 1 < n - 2 {
            r[(c, c + 1)] = h[j] / six;
            r[(c + 1, c)] = h[j] / six;
        }
    }
    (q, r)
}

/// Builds the design on standardized, strictly increasing times.
pub fn build_design<T: Real>(times: &[T]) -> Result<SplineDesign<T>> {
    let n = times.len();
    if n < MIN_LEN {
        return Err(Error::TooShort {
            needed: MIN_LEN,
            got: n,
        });
    }
    if let Some(i) = times.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::NonIncreasingTimes { index: i + 1 });
    }

    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = gp_kernel(times[i], times[j])?;
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }

    let (q, r_tri) = banded_penalty(times);
    let r_tri = Cholesky::factor(&r_tri, "spline band matrix")?;
    let r = &q * r_tri.solve_matrix(&q.transpose());
    let r = (&r + r.transpose()) * T::lit(0.5);

    let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { T::one() } else { times[i] });

    // Split R's spectrum along col(X) and its complement so the null space
    // is exact rather than a pair of roundoff-sized eigenvalues.
    let p_x = projection(&x)?;
    let (_, pv) = sym_eigen(&p_x, "linear projection")?;
    let z = pv.columns(0, n - 2).into_owned();
    let m = z.transpose() * &r * &z;
    let m = (&m + m.transpose()) * T::lit(0.5);
    let (mvals, mvecs) = sym_eigen(&m, "reduced roughness")?;
    let mut eigvecs = DMatrix::zeros(n, n);
    eigvecs.columns_mut(0, 2).copy_from(&pv.columns(n - 2, 2));
    eigvecs.columns_mut(2, n - 2).copy_from(&(&z * mvecs));
    let mut eigvals = DVector::zeros(n);
    for i in 0..n - 2 {
        // M is positive definite in exact arithmetic
        eigvals[i + 2] = if mvals[i] > T::zero() { mvals[i] } else { T::zero() };
    }

    Ok(SplineDesign {
        phi: DMatrix::identity(n, n),
        r,
        x,
        k,
        times: times.to_vec(),
        eigvals,
        eigvecs,
    })
}

fn check_omega<T: Real>(omega: T) -> Result<()> {
    if omega > T::zero() && omega.is_finite() {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            name: "omega",
            value: omega.as_f64(),
        })
    }
}

impl<T: Real> SplineDesign<T> {
    pub fn n(&self) -> usize {
        self.times.len()
    }

    /// Eigenvalues of `R`, ascending, with the linear null space pinned to 0.
    pub fn penalty_eigenvalues(&self) -> &DVector<T> {
        &self.eigvals
    }

    pub fn penalty_eigenvectors(&self) -> &DMatrix<T> {
        &self.eigvecs
    }

    /// Hat-matrix eigenvalues `1 / (1 + ω λ_i)` in the penalty eigenbasis.
    pub fn shrinkage(&self, omega: T) -> Result<DVector<T>> {
        check_omega(omega)?;
        Ok(self.eigvals.map(|l| T::one() / (T::one() + omega * l)))
    }

    /// Effective degrees of freedom `tr(Φ S(ω) Φ')`.
    pub fn edf(&self, omega: T) -> Result<T> {
        Ok(self.shrinkage(omega)?.sum())
    }

    /// `ω` at which the edf equals `target`, by bisection in `log ω`.
    pub fn omega_for_edf(&self, target: T) -> Result<T> {
        let n = T::from_count(self.n());
        if !(target > T::lit(2.0) && target < n) {
            return Err(Error::OutOfRange {
                name: "edf target",
                value: target.as_f64(),
            });
        }
        // e^40 beyond the spectrum on either side puts the edf within
        // roundoff of n and 2 respectively
        let lmin = self.eigvals[2];
        let lmax = self.eigvals[self.n() - 1];
        let mut lo = (T::one() / lmax).ln() - T::lit(40.0);
        let mut hi = (T::one() / lmin).ln() + T::lit(40.0);
        for _ in 0..200 {
            let mid = (lo + hi) * T::lit(0.5);
            if self.edf(mid.exp())? > target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < T::tol(1e-12) {
                break;
            }
        }
        Ok(((lo + hi) * T::lit(0.5)).exp())
    }

    /// Applies `U diag(d) U'` to `v`.
    pub(crate) fn apply_spectral(&self, d: &DVector<T>, v: &DVector<T>) -> DVector<T> {
        let mut c = self.eigvecs.tr_mul(v);
        c.component_mul_assign(d);
        &self.eigvecs * c
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len == self.n() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.n(),
                got: len,
            })
        }
    }

    /// Spline coefficients `ĉ = (Φ'Φ + ωR)^{-1} Φ' y`.
    pub fn coefficients(&self, y: &DVector<T>, omega: T) -> Result<DVector<T>> {
        self.check_len(y.len())?;
        let d = self.shrinkage(omega)?;
        // Φ = I, so ĉ and the fitted values coincide
        Ok(self.apply_spectral(&d, &(self.phi.tr_mul(y))))
    }

    /// Roughness `c' R c`.
    pub fn roughness(&self, c: &DVector<T>) -> T {
        let rc = &self.r * c;
        c.dot(&rc)
    }
}

/// `S = (Φ'Φ + ωR)^{-1}` and hat matrix `A = Φ S Φ'`.
pub fn smoother<T: Real>(design: &SplineDesign<T>, omega: T) -> Result<(DMatrix<T>, DMatrix<T>)> {
    let d = design.shrinkage(omega)?;
    let s = spectral_apply(&design.eigvecs, &d);
    let a = &design.phi * &s * design.phi.transpose();
    Ok((s, a))
}

/// Fitted trend `Φ ĉ` of the smoothing spline with penalty `ω`.
pub fn spline_fit<T: Real>(y: &DVector<T>, design: &SplineDesign<T>, omega: T) -> Result<DVector<T>> {
    let c = design.coefficients(y, omega)?;
    Ok(&design.phi * c)
}
