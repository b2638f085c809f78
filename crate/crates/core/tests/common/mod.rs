//! Reference implementations used as test oracles. They are written from the
//! textbook definitions with plain nalgebra and share no code paths with the
//! library's faer-backed kernels.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use statrs::distribution::{Beta, ContinuousCDF, DiscreteCDF, Hypergeometric};

/// Sorted times in `[0, 1]` with both endpoints present and random spacing.
pub fn random_times<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut gaps: Vec<f64> = (0..n - 1).map(|_| 0.2 + rng.random::<f64>()).collect();
    let total: f64 = gaps.iter().sum();
    gaps.iter_mut().for_each(|g| *g /= total);
    let mut t = Vec::with_capacity(n);
    let mut acc = 0.0;
    t.push(0.0);
    for g in &gaps[..n - 2] {
        acc += g;
        t.push(acc);
    }
    t.push(1.0);
    t
}

pub fn uniform_times(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
}

/// Random smooth curve: a few low-frequency sinusoids plus a line.
pub fn smooth_curve<R: Rng>(t: &[f64], rng: &mut R) -> Vec<f64> {
    let a: [f64; 3] = [
        rng.random_range(-2.0..2.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-0.5..0.5),
    ];
    let slope = rng.random_range(-3.0..3.0);
    t.iter()
        .map(|&x| {
            slope * x
                + a[0] * (std::f64::consts::PI * x).sin()
                + a[1] * (2.0 * std::f64::consts::PI * x + 0.3).cos()
                + a[2] * (5.0 * x).sin()
        })
        .collect()
}

pub fn add_noise<R: Rng>(y: &mut [f64], sigma: f64, rng: &mut R) {
    let d = Normal::new(0.0, sigma).unwrap();
    y.iter_mut().for_each(|v| *v += d.sample(rng));
}

/// Integrated Wiener covariance `min²(3 max − min)/6`.
pub fn wiener2(s: f64, t: f64) -> f64 {
    let (m, big) = if s < t { (s, t) } else { (t, s) };
    m * m * (3.0 * big - m) / 6.0
}

/// Best linear unbiased predictor of the trend under
/// `y = β0 + β1 t + g + ε`, `Cov g = K`, `Var ε = noise`: GLS for `β`, then
/// kriging of the residual.
pub fn gp_blue(t: &[f64], y: &[f64], noise: f64) -> DVector<f64> {
    let n = t.len();
    let k = DMatrix::from_fn(n, n, |i, j| wiener2(t[i], t[j]));
    let v = &k + DMatrix::identity(n, n) * noise;
    let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { t[i] });
    let y = DVector::from_column_slice(y);
    let vchol = v.clone().cholesky().expect("V positive definite");
    let vinv_x = vchol.solve(&x);
    let vinv_y = vchol.solve(&y);
    let beta = (x.transpose() * &vinv_x)
        .cholesky()
        .expect("X'V^{-1}X positive definite")
        .solve(&(x.transpose() * &vinv_y));
    let r = &y - &x * &beta;
    &x * &beta + &k * vchol.solve(&r)
}

/// Roughness `∫ f''²` of the natural cubic interpolant of `(t, c)`, from
/// its second derivatives at the knots (tridiagonal solve) and the exact
/// integral of the piecewise-linear `f''`.
pub fn natural_spline_roughness(t: &[f64], c: &[f64]) -> f64 {
    let n = t.len();
    let h: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
    let m = n - 2;
    let mut a = DMatrix::zeros(m, m);
    let mut rhs = DVector::zeros(m);
    for i in 0..m {
        a[(i, i)] = (h[i] + h[i + 1]) / 3.0;
        if i > 0 {
            a[(i, i - 1)] = h[i] / 6.0;
        }
        if i + 1 < m {
            a[(i, i + 1)] = h[i + 1] / 6.0;
        }
        rhs[i] = (c[i + 2] - c[i + 1]) / h[i + 1] - (c[i + 1] - c[i]) / h[i];
    }
    let inner = a.lu().solve(&rhs).expect("tridiagonal system solvable");
    let mut s = vec![0.0; n];
    s[1..n - 1].copy_from_slice(inner.as_slice());
    h.iter()
        .enumerate()
        .map(|(i, hi)| hi * (s[i] * s[i] + s[i] * s[i + 1] + s[i + 1] * s[i + 1]) / 3.0)
        .sum()
}

/// Cyclic coordinate descent for `‖y − Xγ‖² + λ‖γ‖₁`.
pub fn lasso_cd(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64, tol: f64, max_sweeps: usize) -> DVector<f64> {
    let p = x.ncols();
    let norms: Vec<f64> = (0..p).map(|j| x.column(j).norm_squared()).collect();
    let mut gamma = DVector::zeros(p);
    let mut r = y.clone();
    for _ in 0..max_sweeps {
        let mut delta: f64 = 0.0;
        for j in 0..p {
            if norms[j] == 0.0 {
                continue;
            }
            let old = gamma[j];
            let rho = x.column(j).dot(&r) + norms[j] * old;
            let new = soft(rho, lambda / 2.0) / norms[j];
            if new != old {
                r.axpy(old - new, &x.column(j), 1.0);
                gamma[j] = new;
                delta = delta.max((new - old).abs());
            }
        }
        if delta < tol {
            break;
        }
    }
    gamma
}

fn soft(z: f64, a: f64) -> f64 {
    if z > a {
        z - a
    } else if z < -a {
        z + a
    } else {
        0.0
    }
}

/// Block-coordinate descent on the joint objective
/// `‖y − c − Ψγ‖² + λ‖γ‖₁ + ω c'Rc`: exact ridge step in `c`, one
/// coordinate-descent sweep in `γ`, until neither block moves by `tol`.
pub fn alternating_solver(
    y: &DVector<f64>,
    r: &DMatrix<f64>,
    psi: &DMatrix<f64>,
    lambda: f64,
    omega: f64,
    tol: f64,
    max_iter: usize,
) -> (DVector<f64>, DVector<f64>) {
    let n = y.len();
    let p = psi.ncols();
    let ridge = (DMatrix::identity(n, n) + r * omega)
        .cholesky()
        .expect("I + ωR positive definite");
    let norms: Vec<f64> = (0..p).map(|j| psi.column(j).norm_squared()).collect();
    let mut gamma = DVector::zeros(p);
    let mut c = ridge.solve(y);
    for _ in 0..max_iter {
        let mut resid = y - &c - psi * &gamma;
        let mut delta: f64 = 0.0;
        for j in 0..p {
            let old = gamma[j];
            let rho = psi.column(j).dot(&resid) + norms[j] * old;
            let new = soft(rho, lambda / 2.0) / norms[j];
            if new != old {
                resid.axpy(old - new, &psi.column(j), 1.0);
                gamma[j] = new;
                delta = delta.max((new - old).abs());
            }
        }
        let c_new = ridge.solve(&(y - psi * &gamma));
        delta = delta.max((&c_new - &c).amax());
        c = c_new;
        if delta < tol {
            break;
        }
    }
    (c, gamma)
}

pub fn joint_objective(
    y: &DVector<f64>,
    r: &DMatrix<f64>,
    psi: &DMatrix<f64>,
    c: &DVector<f64>,
    gamma: &DVector<f64>,
    lambda: f64,
    omega: f64,
) -> f64 {
    (y - c - psi * gamma).norm_squared() + lambda * gamma.lp_norm(1) + omega * (r * c).dot(c)
}

/// Laplace CDF with location 0 and scale `b`.
pub fn laplace_cdf(x: f64, b: f64) -> f64 {
    if x < 0.0 {
        0.5 * (x / b).exp()
    } else {
        1.0 - 0.5 * (-x / b).exp()
    }
}

/// One-sample Kolmogorov–Smirnov statistic and asymptotic p-value.
pub fn ks_test(sample: &mut [f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    sample.sort_by(|a, b| a.total_cmp(b));
    let n = sample.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sample.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    let en = n.sqrt();
    (d, kolmogorov_q((en + 0.12 + 0.11 / en) * d))
}

/// `Q(x) = 2 Σ (−1)^{k−1} exp(−2k²x²)`.
fn kolmogorov_q(x: f64) -> f64 {
    if x < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * x * x).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Exact two-sided Clopper–Pearson interval for `k` successes in `n`.
pub fn clopper_pearson(k: u64, n: u64, level: f64) -> (f64, f64) {
    let a = (1.0 - level) / 2.0;
    let lo = if k == 0 {
        0.0
    } else {
        Beta::new(k as f64, (n - k + 1) as f64).unwrap().inverse_cdf(a)
    };
    let hi = if k == n {
        1.0
    } else {
        Beta::new((k + 1) as f64, (n - k) as f64).unwrap().inverse_cdf(1.0 - a)
    };
    (lo, hi)
}

/// One-sided Fisher exact p-value for `H1: p_hi < p_lo`, given `k_lo` of
/// `n_lo` and `k_hi` of `n_hi` successes.
pub fn fisher_decrease_p(k_lo: u64, n_lo: u64, k_hi: u64, n_hi: u64) -> f64 {
    let total = n_lo + n_hi;
    let successes = k_lo + k_hi;
    if successes == 0 || successes == total {
        return 1.0;
    }
    let h = Hypergeometric::new(total, successes, n_hi).unwrap();
    h.cdf(k_hi)
}

/// Adjacent pairs whose one-sided test for a decrease rejects at `alpha`,
/// with their p-values. An empty result means no evidence against a
/// nondecreasing sequence.
pub fn monotone_violations(counts: &[(u64, u64)], alpha: f64) -> Vec<(usize, f64)> {
    counts
        .windows(2)
        .enumerate()
        .filter_map(|(i, w)| {
            let p = fisher_decrease_p(w[0].0, w[0].1, w[1].0, w[1].1);
            (p < alpha).then_some((i, p))
        })
        .collect()
}

pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}
