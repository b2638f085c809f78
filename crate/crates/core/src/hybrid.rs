//! Joint L2/L1 estimator: spline trend plus sparse steps.
//!
//! For fixed `γ` the optimal spline coefficients are `ĉ(γ) = S Φ'(y − Ψγ)`,
//! and substituting back leaves the LASSO `‖W y − W Ψ γ‖² + λ‖γ‖₁` with
//! `W² = I − Φ S Φ'`. The LASSO is solved with FISTA on its Gram form, then
//! `ĉ` is recovered by back-substitution.

use nalgebra::{DMatrix, DVector};

use crate::basis::StepBasis;
use crate::error::{Error, Result};
use crate::linalg::{power_iteration, spectral_apply};
use crate::scalar::Real;
use crate::spline::SplineDesign;

/// Absolute magnitude above which a coefficient counts as active.
pub const ACTIVE_TOL: f64 = 1e-10;
/// Default FISTA stopping limit on the max absolute coefficient change.
pub const DEFAULT_TOL: f64 = 1e-4;
pub const DEFAULT_MAX_ITER: usize = 20_000;

const POWER_TOL: f64 = 1e-8;
const POWER_MAX_ITER: usize = 10_000;

/// Symmetric square root of `I − Φ S(ω) Φ'`.
#[derive(Debug, Clone)]
pub struct Whitener<T: Real> {
    pub w: DMatrix<T>,
    pub omega: T,
}

/// Eigenvalues of `I − A(ω)` in the penalty eigenbasis, `ωλ / (1 + ωλ)`.
pub(crate) fn residual_spectrum<T: Real>(design: &SplineDesign<T>, omega: T) -> Result<DVector<T>> {
    let shrink = design.shrinkage(omega)?;
    let mut out = shrink.map(|s| T::one() - s);
    for v in out.iter_mut() {
        if *v < T::zero() {
            if *v < T::lit(-1e-10) {
                return Err(Error::NegativeEigenvalue {
                    what: "I - A(omega)",
                    value: v.as_f64(),
                });
            }
            *v = T::zero();
        }
    }
    Ok(out)
}

pub fn whitener<T: Real>(design: &SplineDesign<T>, omega: T) -> Result<Whitener<T>> {
    let mu = residual_spectrum(design, omega)?;
    let root = mu.map(|m| m.sqrt());
    let w = spectral_apply(design.penalty_eigenvectors(), &root);
    Ok(Whitener { w, omega })
}

/// `(|z| − α)₊ sign(z)` elementwise.
pub fn soft_threshold<T: Real>(z: &DVector<T>, alpha: T) -> DVector<T> {
    z.map(|v| shrink(v, alpha))
}

#[inline]
fn shrink<T: Real>(v: T, alpha: T) -> T {
    if v > alpha {
        v - alpha
    } else if v < -alpha {
        v + alpha
    } else {
        T::zero()
    }
}

/// LASSO `‖y − Xγ‖² + λ‖γ‖₁` held as `G = X'X`, `c = X'y`, `y'y`.
#[derive(Debug, Clone)]
pub struct LassoGram<T: Real> {
    pub g: DMatrix<T>,
    pub c: DVector<T>,
    pub yty: T,
    /// Largest eigenvalue of `G`.
    pub lmax: T,
}

impl<T: Real> LassoGram<T> {
    pub fn new(g: DMatrix<T>, c: DVector<T>, yty: T) -> Result<Self> {
        if g.nrows() != g.ncols() || g.nrows() != c.len() {
            return Err(Error::DimensionMismatch {
                expected: c.len(),
                got: g.nrows(),
            });
        }
        let lmax = power_iteration(&g, T::tol(POWER_TOL), POWER_MAX_ITER);
        if !(lmax > T::zero()) {
            return Err(Error::ZeroDesign);
        }
        Ok(Self { g, c, yty, lmax })
    }

    pub fn from_design(x: &DMatrix<T>, y: &DVector<T>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                got: y.len(),
            });
        }
        Self::new(x.tr_mul(x), x.tr_mul(y), y.norm_squared())
    }

    /// Smallest `λ` whose solution is exactly zero: `2‖X'y‖∞`.
    pub fn kkt_lambda(&self) -> T {
        T::lit(2.0) * self.c.amax()
    }

    /// `‖y − Xγ‖² + λ‖γ‖₁` evaluated through the Gram form.
    pub fn objective(&self, gamma: &DVector<T>, lambda: T) -> T {
        let gg = &self.g * gamma;
        let sse = gamma.dot(&gg) - T::lit(2.0) * self.c.dot(gamma) + self.yty;
        sse + lambda * gamma.lp_norm(1)
    }
}

#[derive(Debug, Clone)]
pub struct FistaOutcome<T: Real> {
    pub gamma: DVector<T>,
    pub iterations: usize,
    pub converged: bool,
}

fn check_lambda<T: Real>(lambda: T) -> Result<()> {
    if lambda > T::zero() && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            name: "lambda",
            value: lambda.as_f64(),
        })
    }
}

/// FISTA on a prepared Gram form.
///
/// Gradient step `z = γ − τ(Gγ − c)` with `τ = 1/λ_max(G)`, shrinkage at
/// `α = λτ/2`, momentum `s ← (1 + √(1 + 4s²))/2`. Stops when no coefficient
/// moves by more than `tol`.
pub fn fista_gram<T: Real>(
    prob: &LassoGram<T>,
    lambda: T,
    gamma0: &DVector<T>,
    tol: T,
    max_iter: usize,
) -> Result<FistaOutcome<T>> {
    check_lambda(lambda)?;
    let p = prob.c.len();
    if gamma0.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: gamma0.len(),
        });
    }
    let tau = T::one() / prob.lmax;
    let alpha = lambda * tau / T::lit(2.0);
    let mut q_prev = gamma0.clone();
    let mut q = gamma0.clone();
    let mut y = gamma0.clone();
    let mut grad = DVector::zeros(p);
    let mut s = T::one();
    for k in 1..=max_iter {
        grad.copy_from(&prob.c);
        grad.gemv(T::one(), &prob.g, &y, -T::one());
        let mut delta = T::zero();
        for j in 0..p {
            let v = shrink(y[j] - tau * grad[j], alpha);
            let d = (v - q[j]).abs();
            if d > delta {
                delta = d;
            }
            q_prev[j] = q[j];
            q[j] = v;
        }
        if delta <= tol {
            return Ok(FistaOutcome {
                gamma: q,
                iterations: k,
                converged: true,
            });
        }
        let s_next = (T::one() + (T::one() + T::lit(4.0) * s * s).sqrt()) / T::lit(2.0);
        let mom = (s - T::one()) / s_next;
        for j in 0..p {
            y[j] = q[j] + mom * (q[j] - q_prev[j]);
        }
        s = s_next;
    }
    Ok(FistaOutcome {
        gamma: q,
        iterations: max_iter,
        converged: false,
    })
}

/// FISTA for `‖y_w − X_w γ‖² + λ‖γ‖₁`.
pub fn fista<T: Real>(
    xw: &DMatrix<T>,
    yw: &DVector<T>,
    lambda: T,
    gamma0: &DVector<T>,
    tol: T,
    max_iter: usize,
) -> Result<FistaOutcome<T>> {
    let prob = LassoGram::from_design(xw, yw)?;
    fista_gram(&prob, lambda, gamma0, tol, max_iter)
}

/// Fitted decomposition at one `(λ, ω)`.
#[derive(Debug, Clone)]
pub struct HybridFit<T: Real> {
    pub gamma_hat: DVector<T>,
    pub c_hat: DVector<T>,
    pub trend: DVector<T>,
    pub anomaly: DVector<T>,
    pub residual: DVector<T>,
    pub lambda: T,
    pub omega: T,
    pub rmse: T,
    pub edf_total: T,
    pub n_active: usize,
    pub iterations: usize,
    pub converged: bool,
}

impl<T: Real> HybridFit<T> {
    /// Columns with `|γ̂_j|` above `max(threshold, ACTIVE_TOL)`.
    pub fn flagged_columns(&self, threshold: T) -> Vec<usize> {
        let cut = threshold.max(T::lit(ACTIVE_TOL));
        (0..self.gamma_hat.len())
            .filter(|&j| self.gamma_hat[j].abs() > cut)
            .collect()
    }

    pub fn sse(&self) -> T {
        self.residual.norm_squared()
    }
}

pub fn count_active<T: Real>(gamma: &DVector<T>) -> usize {
    let tol = T::lit(ACTIVE_TOL);
    gamma.iter().filter(|v| v.abs() > tol).count()
}

/// Back-substitutes `ĉ` for a solved `γ̂` and assembles the fit summary.
pub(crate) fn assemble_fit<T: Real>(
    y: &DVector<T>,
    design: &SplineDesign<T>,
    basis: &StepBasis<T>,
    outcome: FistaOutcome<T>,
    lambda: T,
    omega: T,
    edf_smooth: T,
) -> Result<HybridFit<T>> {
    let anomaly = &basis.psi * &outcome.gamma;
    let c_hat = design.coefficients(&(y - &anomaly), omega)?;
    let trend = &design.phi * &c_hat;
    let residual = y - &trend - &anomaly;
    let n_active = count_active(&outcome.gamma);
    let rmse = (residual.norm_squared() / T::from_count(y.len())).sqrt();
    Ok(HybridFit {
        gamma_hat: outcome.gamma,
        c_hat,
        trend,
        anomaly,
        residual,
        lambda,
        omega,
        rmse,
        edf_total: edf_smooth + T::from_count(n_active),
        n_active,
        iterations: outcome.iterations,
        converged: outcome.converged,
    })
}

fn check_dims<T: Real>(y: &DVector<T>, design: &SplineDesign<T>, basis: &StepBasis<T>) -> Result<()> {
    for got in [y.len(), basis.n()] {
        if got != design.n() {
            return Err(Error::DimensionMismatch {
                expected: design.n(),
                got,
            });
        }
    }
    Ok(())
}

/// Solves the joint problem at `(λ, ω)` through an explicit whitener.
pub fn hybrid_fit<T: Real>(
    y: &DVector<T>,
    design: &SplineDesign<T>,
    basis: &StepBasis<T>,
    lambda: T,
    omega: T,
    tol: T,
    max_iter: usize,
) -> Result<HybridFit<T>> {
    check_dims(y, design, basis)?;
    check_lambda(lambda)?;
    let w = whitener(design, omega)?;
    let xw = &w.w * &basis.psi;
    let yw = &w.w * y;
    let gamma0 = DVector::zeros(basis.ncols());
    let outcome = fista(&xw, &yw, lambda, &gamma0, tol, max_iter)?;
    assemble_fit(y, design, basis, outcome, lambda, omega, design.edf(omega)?)
}

/// `‖y − Φc − Ψγ‖² + λ‖γ‖₁ + ω c'Rc`.
pub fn hybrid_objective<T: Real>(
    y: &DVector<T>,
    design: &SplineDesign<T>,
    basis: &StepBasis<T>,
    c: &DVector<T>,
    gamma: &DVector<T>,
    lambda: T,
    omega: T,
) -> T {
    let r = y - &design.phi * c - &basis.psi * gamma;
    r.norm_squared() + lambda * gamma.lp_norm(1) + omega * design.roughness(c)
}
