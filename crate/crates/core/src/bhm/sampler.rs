//! Full-conditional Gibbs updates for the orthogonalized model.
//!
//! Hierarchy (gamma laws in shape/rate):
//!
//! ```text
//! y | ·        ~ N(Xβ* + Ψ*γ* + Hg, σ² I)
//! γ* | g, τ², σ² ~ N(Jg, σ² diag(τ²))
//! τ_j² | λ²    ~ Exp(rate λ²/2)
//! λ²           ~ Gamma(α_λ, β_λ)
//! g | ω        ~ N(0, K/ω)
//! ω            ~ Gamma(α_ω, β_ω)
//! β*, σ²       flat
//! ```

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use super::ortho::{ols, OrthoOperators};
use crate::basis::StepBasis;
use crate::error::{Error, Result};
use crate::linalg::Cholesky;
use crate::scalar::Real;
use crate::spline::SplineDesign;

/// Smallest admissible `τ_j²`.
pub const TAU2_FLOOR: f64 = 1e-12;
/// Shape of the anchored gamma priors.
pub const PRIOR_SHAPE: f64 = 2.0;
/// Rate used when no hybrid estimate is available to anchor a prior.
pub const FALLBACK_RATE: f64 = 2.0;

/// Gamma priors on `λ²` and `ω`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Priors<T> {
    pub alpha_lambda2: T,
    pub beta_lambda2: T,
    pub alpha_omega: T,
    pub beta_omega: T,
}

impl<T: Real> Default for Priors<T> {
    fn default() -> Self {
        Self::anchored(None, None)
    }
}

impl<T: Real> Priors<T> {
    /// Shape 2 with the rate chosen so the prior mean equals the given
    /// value, rate 2 otherwise.
    pub fn anchored(lambda2_mean: Option<T>, omega_mean: Option<T>) -> Self {
        let shape = T::lit(PRIOR_SHAPE);
        let rate = |m: Option<T>| match m {
            Some(m) if m > T::zero() && m.is_finite() => shape / m,
            _ => T::lit(FALLBACK_RATE),
        };
        Self {
            alpha_lambda2: shape,
            beta_lambda2: rate(lambda2_mean),
            alpha_omega: shape,
            beta_omega: rate(omega_mean),
        }
    }

    /// Priors centred on a hybrid fit with penalties `(λ, ω)` and residual
    /// variance `σ̂²`: `λ² = (λ / 2σ̂)²` and `ω_gp = ω / σ̂²`.
    pub fn from_hybrid(lambda: T, omega: T, sigma2_hat: T) -> Self {
        if !(sigma2_hat > T::zero()) {
            return Self::default();
        }
        let l = lambda / (T::lit(2.0) * sigma2_hat.sqrt());
        Self::anchored(Some(l * l), Some(omega / sigma2_hat))
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha_lambda2", self.alpha_lambda2),
            ("beta_lambda2", self.beta_lambda2),
            ("alpha_omega", self.alpha_omega),
            ("beta_omega", self.beta_omega),
        ] {
            if !(v > T::zero() && v.is_finite()) {
                return Err(Error::OutOfRange {
                    name,
                    value: v.as_f64(),
                });
            }
        }
        Ok(())
    }

    pub fn lambda2_mean(&self) -> T {
        self.alpha_lambda2 / self.beta_lambda2
    }

    pub fn omega_mean(&self) -> T {
        self.alpha_omega / self.beta_omega
    }
}

/// One point of the chain in the starred parametrization.
#[derive(Debug, Clone, PartialEq)]
pub struct MCMCState<T: Real> {
    pub beta_star: DVector<T>,
    pub gamma_star: DVector<T>,
    pub g: DVector<T>,
    pub sigma2: T,
    pub lambda2: T,
    pub omega: T,
    pub tau2: DVector<T>,
}

/// Michael–Schucany–Haas draw from the inverse Gaussian with mean `mu` and
/// shape `lambda`. An infinite mean gives the Lévy limit `λ/ν²`.
pub fn sample_inverse_gaussian<R: Rng + ?Sized>(mu: f64, lambda: f64, rng: &mut R) -> f64 {
    let nu: f64 = rng.sample(StandardNormal);
    let y = nu * nu;
    if mu.is_infinite() {
        return lambda / y;
    }
    // μ(1 + a − √(a² + 2a)) rewritten to avoid cancellation when a is large
    let a = mu * y / (2.0 * lambda);
    let x = mu / (1.0 + a + a * (1.0 + 2.0 / a).sqrt());
    let u: f64 = rng.random();
    let far = mu * (mu / x);
    if u <= mu / (mu + x) || !far.is_finite() {
        x
    } else {
        far
    }
}

/// One draw of a step coefficient from its hierarchical prior:
/// `τ² ~ Exp(rate λ²/2)`, `γ | τ² ~ N(0, σ²τ²)`. Marginally Laplace with
/// scale `√(σ²/λ²)`.
pub fn sample_step_prior<R: Rng + ?Sized>(sigma2: f64, lambda2: f64, rng: &mut R) -> Result<f64> {
    let exp = Exp::new(lambda2 / 2.0).map_err(|_| Error::OutOfRange {
        name: "lambda2",
        value: lambda2,
    })?;
    if !(sigma2 > 0.0) {
        return Err(Error::OutOfRange {
            name: "sigma2",
            value: sigma2,
        });
    }
    let tau2: f64 = exp.sample(rng);
    let z: f64 = rng.sample(StandardNormal);
    Ok(z * (sigma2 * tau2).sqrt())
}

fn gamma_draw<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    let dist = Gamma::new(shape, 1.0 / rate).map_err(|_| Error::OutOfRange {
        name: "gamma parameters",
        value: shape,
    })?;
    Ok(dist.sample(rng))
}

fn normals<T: Real, R: Rng + ?Sized>(len: usize, rng: &mut R) -> DVector<T> {
    DVector::from_fn(len, |_, _| T::lit(rng.sample::<f64, _>(StandardNormal)))
}

/// Blocks held fixed during a sweep; used to reduce the model in tests and
/// diagnostics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Frozen {
    /// Keep `γ*`, `τ²`, `λ²` fixed and drop the step prior from the other
    /// conditionals.
    pub anomaly: bool,
    pub sigma2: bool,
    pub beta: bool,
    pub gamma: bool,
    pub tau2: bool,
    pub lambda2: bool,
    pub g: bool,
    pub omega: bool,
}

/// Precomputed pieces shared by every sweep of every chain.
#[derive(Debug, Clone)]
pub struct GibbsSampler<'a, T: Real> {
    pub y: DVector<T>,
    pub design: &'a SplineDesign<T>,
    pub basis: &'a StepBasis<T>,
    pub ops: &'a OrthoOperators<T>,
    pub priors: Priors<T>,
    pub frozen: Frozen,
    xtx: Cholesky<T>,
    ptp: DMatrix<T>,
    hth: DMatrix<T>,
    kinv: DMatrix<T>,
}

impl<'a, T: Real> GibbsSampler<'a, T> {
    pub fn new(
        y: &DVector<T>,
        design: &'a SplineDesign<T>,
        basis: &'a StepBasis<T>,
        ops: &'a OrthoOperators<T>,
        priors: Priors<T>,
    ) -> Result<Self> {
        priors.validate()?;
        let n = design.n();
        for got in [y.len(), basis.n(), ops.h.nrows()] {
            if got != n {
                return Err(Error::DimensionMismatch { expected: n, got });
            }
        }
        let xtx = Cholesky::factor(&design.x.tr_mul(&design.x), "X'X")?;
        let kinv = Cholesky::factor(&design.k, "GP covariance K")?.inverse();
        Ok(Self {
            y: y.clone(),
            design,
            basis,
            ops,
            priors,
            frozen: Frozen::default(),
            xtx,
            ptp: ops.psi_star.tr_mul(&ops.psi_star),
            hth: ops.h.tr_mul(&ops.h),
            kinv,
        })
    }

    pub fn with_frozen(mut self, frozen: Frozen) -> Self {
        self.frozen = frozen;
        self
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    fn fitted_without(&self, s: &MCMCState<T>, x: bool, psi: bool, h: bool) -> DVector<T> {
        let mut r = self.y.clone();
        if x {
            r.gemv(-T::one(), &self.design.x, &s.beta_star, T::one());
        }
        if psi {
            r.gemv(-T::one(), &self.ops.psi_star, &s.gamma_star, T::one());
        }
        if h {
            r.gemv(-T::one(), &self.ops.h, &s.g, T::one());
        }
        r
    }

    /// `γ* − Jg`, the natural step coefficients.
    fn deviation(&self, s: &MCMCState<T>) -> DVector<T> {
        let mut d = s.gamma_star.clone();
        if self.ops.orthogonalized {
            d.gemv(-T::one(), &self.ops.j, &s.g, T::one());
        }
        d
    }

    /// `σ² ~ IG((2n−1)/2, r)`,
    /// `r = ½‖y − Xβ* − Ψ*γ* − Hg‖² + ½(γ* − Jg)' F^{-1} (γ* − Jg)`.
    pub fn draw_sigma2<R: Rng + ?Sized>(&self, s: &mut MCMCState<T>, rng: &mut R) -> Result<()> {
        let n = self.n() as f64;
        let resid = self.fitted_without(s, true, true, true);
        let mut r = resid.norm_squared().as_f64() / 2.0;
        let shape = if self.frozen.anomaly {
            n / 2.0
        } else {
            let dev = self.deviation(s);
            let quad: f64 = dev
                .iter()
                .zip(s.tau2.iter())
                .map(|(d, t)| (*d * *d / *t).as_f64())
                .sum();
            r += quad / 2.0;
            (2.0 * n - 1.0) / 2.0
        };
        s.sigma2 = T::lit(r / gamma_draw(shape, 1.0, rng)?);
        Ok(())
    }

    /// `β* ~ N((X'X)^{-1}X'(y − Ψ*γ* − Hg), σ²(X'X)^{-1})`.
    pub fn draw_beta<R: Rng + ?Sized>(&self, s: &mut MCMCState<T>, rng: &mut R) {
        let r = self.fitted_without(s, false, true, true);
        let b = self.design.x.tr_mul(&r);
        s.beta_star = self.xtx.sample_with_precision(&b, normals(2, rng), s.sigma2.sqrt());
    }

    /// Precision `(Ψ*'Ψ* + F^{-1})/σ²`,
    /// linear term `(Ψ*'(y − Xβ* − Hg) + F^{-1}Jg)/σ²`.
    pub fn draw_gamma<R: Rng + ?Sized>(&self, s: &mut MCMCState<T>, rng: &mut R) -> Result<()> {
        let p = s.gamma_star.len();
        let mut prec = self.ptp.clone();
        let mut b = self.ops.psi_star.tr_mul(&self.fitted_without(s, true, false, true));
        let jg = if self.ops.orthogonalized {
            Some(&self.ops.j * &s.g)
        } else {
            None
        };
        for i in 0..p {
            let inv = T::one() / s.tau2[i];
            prec[(i, i)] += inv;
            if let Some(jg) = &jg {
                b[i] += inv * jg[i];
            }
        }
        let chol = Cholesky::factor(&prec, "gamma* conditional precision")?;
        s.gamma_star = chol.sample_with_precision(&b, normals(p, rng), s.sigma2.sqrt());
        Ok(())
    }

    /// `1/τ_j² ~ IG(√(λ²σ²/(γ* − Jg)_j²), λ²)`, floored at `TAU2_FLOOR`.
    pub fn draw_tau2<R: Rng + ?Sized>(&self, s: &mut MCMCState<T>, rng: &mut R) {
        let dev = self.deviation(s);
        let l2 = s.lambda2.as_f64();
        let ls = (l2 * s.sigma2.as_f64()).sqrt();
        let mut clamped = 0usize;
        for (t, d) in s.tau2.iter_mut().zip(dev.iter()) {
            let mu = ls / d.as_f64().abs();
            let w = sample_inverse_gaussian(mu, l2, rng);
            let tau2 = 1.0 / w;
            *t = if tau2 > TAU2_FLOOR && tau2.is_finite() {
                T::lit(tau2)
            } else {
                clamped += 1;
                T::lit(TAU2_FLOOR)
            };
        }
        if clamped > 0 {
            log::debug!("clamped {clamped} tau^2 draws at {TAU2_FLOOR:e}");
        }
    }

    /// `λ² ~ Gamma(α_λ + n − 1, β_λ + Σ τ_j²/2)`.
    pub fn draw_lambda2<R: Rng + ?Sized>(&self, s: &mut MCMCState<T>, rng: &mut R) -> Result<()> {
        let shape = self.priors.alpha_lambda2.as_f64() + s.tau2.len() as f64;
        let rate = self.priors.beta_lambda2.as_f64() + s.tau2.sum().as_f64() / 2.0;
        s.lambda2 = T::lit(gamma_draw(shape, rate, rng)?);
        Ok(())
    }

    /// Precision `ωK^{-1} + (H'H + J'F^{-1}J)/σ²`,
    /// linear term `(H'(y − Xβ* − Ψ*γ*) + J'F^{-1}γ*)/σ²`.
    pub fn draw_g<R: Rng + ?Sized>(&self, s: &mut MCMCState<T>, rng: &mut R) -> Result<()> {
        let n = self.n();
        // work with σ² times the precision so σ enters only as a scale
        let mut prec = &self.kinv * (s.omega * s.sigma2);
        prec += &self.hth;
        let mut b = self.ops.h.tr_mul(&self.fitted_without(s, true, true, false));
        if self.ops.orthogonalized && !self.frozen.anomaly {
            let mut jt = self.ops.j.transpose();
            for (c, mut col) in jt.column_iter_mut().enumerate() {
                col /= s.tau2[c].sqrt();
            }
            prec.gemm(T::one(), &jt, &jt.transpose(), T::one());
            let scaled = DVector::from_fn(s.gamma_star.len(), |j, _| s.gamma_star[j] / s.tau2[j].sqrt());
            b.gemv(T::one(), &jt, &scaled, T::one());
        }
        let chol = Cholesky::factor(&prec, "g conditional precision")?;
        s.g = chol.sample_with_precision(&b, normals(n, rng), s.sigma2.sqrt());
        Ok(())
    }

    /// `ω ~ Gamma(n/2 + α_ω, g'K^{-1}g/2 + β_ω)`.
    pub fn draw_omega<R: Rng + ?Sized>(&self, s: &mut MCMCState<T>, rng: &mut R) -> Result<()> {
        let quad = (&self.kinv * &s.g).dot(&s.g).as_f64();
        let shape = self.n() as f64 / 2.0 + self.priors.alpha_omega.as_f64();
        let rate = quad.max(0.0) / 2.0 + self.priors.beta_omega.as_f64();
        s.omega = T::lit(gamma_draw(shape, rate, rng)?);
        Ok(())
    }

    /// One sweep in the order σ², β*, γ*, τ², λ², g, ω.
    pub fn gibbs_step<R: Rng + ?Sized>(&self, s: &mut MCMCState<T>, rng: &mut R) -> Result<()> {
        let f = self.frozen;
        if !f.sigma2 {
            self.draw_sigma2(s, rng)?;
        }
        if !f.beta {
            self.draw_beta(s, rng);
        }
        if !f.anomaly {
            if !f.gamma {
                self.draw_gamma(s, rng)?;
            }
            if !f.tau2 {
                self.draw_tau2(s, rng);
            }
            if !f.lambda2 {
                self.draw_lambda2(s, rng)?;
            }
        }
        if !f.g {
            self.draw_g(s, rng)?;
        }
        if !f.omega {
            self.draw_omega(s, rng)?;
        }
        Ok(())
    }

    /// Natural parameters: `γ = γ* − Jg`, `β = β* − (X'X)^{-1}X'(Ψγ + g)`.
    pub fn back_transform(&self, s: &MCMCState<T>) -> (DVector<T>, DVector<T>) {
        if !self.ops.orthogonalized {
            return (s.beta_star.clone(), s.gamma_star.clone());
        }
        let gamma = self.deviation(s);
        let v = &self.basis.psi * &gamma + &s.g;
        let beta = &s.beta_star - self.xtx.solve(&self.design.x.tr_mul(&v));
        (beta, gamma)
    }

    /// `Xβ* + Ψ*γ* + Hg`.
    pub fn starred_signal(&self, s: &MCMCState<T>) -> DVector<T> {
        &self.y - self.fitted_without(s, true, true, true)
    }
}

/// Linear-interpolation (type 7) quantile of sorted data.
pub(crate) fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Starting values: steps seeded at first differences in the top 5%,
/// OLS trend on `y − Ψγ`, `g = 0`, `λ²`, `ω` at their prior means and
/// `τ² = 2/λ²`. `σ²` is a placeholder overwritten by the first sweep.
pub fn init_state<T: Real>(
    y: &DVector<T>,
    basis: &StepBasis<T>,
    design: &SplineDesign<T>,
    ops: &OrthoOperators<T>,
    priors: &Priors<T>,
) -> Result<MCMCState<T>> {
    priors.validate()?;
    let n = design.n();
    if y.len() != n || basis.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: y.len(),
        });
    }
    let z: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]).abs().as_f64()).collect();
    let mut sorted = z.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let z95 = quantile_sorted(&sorted, 0.95);
    let gamma = DVector::from_fn(n - 1, |i, _| if z[i] >= z95 { T::lit(z[i]) } else { T::zero() });
    let detrended = y - &basis.psi * &gamma;
    let beta = ols(&design.x, &detrended)?;
    let g = DVector::zeros(n);
    let (beta_star, gamma_star) = ops.to_starred(design, basis, &beta, &gamma, &g)?;
    let resid = &detrended - &design.x * &beta;
    let sigma2 = (resid.norm_squared() / T::from_count(n)).max(T::eps());
    let lambda2 = priors.lambda2_mean();
    Ok(MCMCState {
        beta_star,
        gamma_star,
        g,
        sigma2,
        lambda2,
        omega: priors.omega_mean(),
        tau2: DVector::from_element(n - 1, T::lit(2.0) / lambda2),
    })
}
