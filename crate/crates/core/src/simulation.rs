//! Synthetic cycles with a planted level shift and Monte Carlo detection
//! probability surfaces.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bhm::detect_bayes;
use crate::bhm::ChainConfig;
use crate::error::{Error, Result};
use crate::pipeline::{bayes_model, prepare, run_bayes, run_hybrid, BayesOptions, Criterion, HybridOptions};
use crate::timeseries::{fmt_num, TimeSeries};

/// Default trend length.
pub const TREND_LEN: usize = 300;
/// Default disturbance row.
pub const DISTURBANCE_INDEX: usize = 150;
/// Probability levels of the exported contours.
pub const CONTOUR_LEVELS: [f64; 3] = [0.1, 0.5, 0.9];
/// A flag within this many rows of the planted step counts as a detection.
pub const DETECTION_WINDOW: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    HybridElbow,
    HybridAicc,
    Bayes,
}

impl Method {
    pub fn tag(&self) -> &'static str {
        match self {
            Method::HybridElbow => "hybrid_elbow",
            Method::HybridAicc => "hybrid_aicc",
            Method::Bayes => "bayes",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hybrid_elbow" | "elbow" => Ok(Self::HybridElbow),
            "hybrid_aicc" | "aicc" => Ok(Self::HybridAicc),
            "bayes" => Ok(Self::Bayes),
            other => Err(Error::InvalidInput(format!("unknown method `{other}`"))),
        }
    }
}

/// Concave headloss-like ramp rising from 0 to `height` over `n` samples:
/// an integrated decreasing logistic, `u(x) = x − ln(1 + e^{a(x−b)})/a`.
pub fn reference_trend(n: usize, height: f64) -> Vec<f64> {
    let (a, b) = (6.0, 0.6);
    let softplus = |z: f64| z.max(0.0) + (-z.abs()).exp().ln_1p();
    let u = |x: f64| x - softplus(a * (x - b)) / a;
    let (u0, u1) = (u(0.0), u(1.0));
    (0..n)
        .map(|i| {
            let x = i as f64 / (n.max(2) - 1) as f64;
            height * (u(x) - u0) / (u1 - u0)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyConfig {
    pub trend: Vec<f64>,
    pub disturbance_index: usize,
    pub disturbance_sizes: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub replicates: usize,
    pub method: Method,
    pub seed: u64,
    /// Minimum `|γ|` (hybrid) or `|E γ|` (bayes) for a flag. Zero keeps the
    /// pure nonzero-coefficient and interval-excludes-zero rules.
    pub threshold: f64,
    pub hybrid: HybridOptions,
    pub bayes: BayesOptions,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            trend: reference_trend(TREND_LEN, 8.0),
            disturbance_index: DISTURBANCE_INDEX,
            disturbance_sizes: vec![0.05, 0.2, 0.6, 2.0],
            sigmas: vec![0.02, 0.08, 0.2, 0.5],
            replicates: 20,
            method: Method::HybridAicc,
            seed: 0,
            threshold: 0.0,
            hybrid: HybridOptions::default(),
            bayes: BayesOptions::default(),
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.disturbance_sizes.is_empty() || self.sigmas.is_empty() {
            return Err(Error::InvalidInput("size and sigma grids must be nonempty".into()));
        }
        if self.replicates == 0 {
            return Err(Error::InvalidInput("at least one replicate is required".into()));
        }
        if self.disturbance_index == 0 || self.disturbance_index + 1 >= self.trend.len() {
            return Err(Error::InvalidInput(format!(
                "disturbance index {} is not interior to a trend of length {}",
                self.disturbance_index,
                self.trend.len()
            )));
        }
        if let Some(&s) = self.sigmas.iter().find(|s| !(**s >= 0.0)) {
            return Err(Error::OutOfRange {
                name: "sigma",
                value: s,
            });
        }
        self.bayes.chain.validate()
    }

    /// Random stream of replicate `rep` in cell `cell`.
    fn rng(&self, cell: usize, rep: usize) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream((cell * self.replicates + rep) as u64);
        rng
    }
}

/// `y_i = trend_i ± size·1[i ≥ index] + N(0, σ²)` with a fair-coin sign.
pub fn synth_cycle<R: Rng + ?Sized>(
    trend: &[f64],
    size: f64,
    index: usize,
    sigma: f64,
    rng: &mut R,
) -> Result<TimeSeries<f64>> {
    if !(sigma >= 0.0) {
        return Err(Error::OutOfRange {
            name: "sigma",
            value: sigma,
        });
    }
    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
    let noise = Normal::new(0.0, sigma).map_err(|_| Error::OutOfRange {
        name: "sigma",
        value: sigma,
    })?;
    let values = trend
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let step = if i >= index { sign * size } else { 0.0 };
            let e = if sigma > 0.0 { noise.sample(rng) } else { 0.0 };
            t + step + e
        })
        .collect();
    TimeSeries::from_values(values)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceCell {
    pub size: f64,
    pub sigma: f64,
    pub detected: usize,
    /// Replicates that produced a verdict.
    pub total: usize,
    pub failed: usize,
}

impl SurfaceCell {
    pub fn probability(&self) -> f64 {
        if self.total == 0 {
            f64::NAN
        } else {
            self.detected as f64 / self.total as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSurface {
    pub method: Method,
    pub sizes: Vec<f64>,
    pub sigmas: Vec<f64>,
    /// Row-major by size, then sigma.
    pub cells: Vec<SurfaceCell>,
    pub contour_levels: Vec<f64>,
}

/// A contour segment in `(size, sigma)` coordinates.
pub type Segment = [[f64; 2]; 2];

impl DetectionSurface {
    pub fn cell(&self, size_idx: usize, sigma_idx: usize) -> &SurfaceCell {
        &self.cells[size_idx * self.sigmas.len() + sigma_idx]
    }

    /// Marching-squares segments of the probability surface at `level`.
    pub fn contour(&self, level: f64) -> Vec<Segment> {
        let (ns, nz) = (self.sizes.len(), self.sigmas.len());
        let mut out = Vec::new();
        if ns < 2 || nz < 2 {
            return out;
        }
        let p = |i: usize, j: usize| self.cell(i, j).probability();
        let pt = |i: usize, j: usize| [self.sizes[i], self.sigmas[j]];
        let lerp = |a: [f64; 2], b: [f64; 2], pa: f64, pb: f64| {
            let t = if pb == pa { 0.5 } else { (level - pa) / (pb - pa) };
            [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
        };
        for i in 0..ns - 1 {
            for j in 0..nz - 1 {
                let corners = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)];
                let vals: Vec<f64> = corners.iter().map(|&(a, b)| p(a, b)).collect();
                if vals.iter().any(|v| v.is_nan()) {
                    continue;
                }
                let mut crossings = Vec::new();
                for k in 0..4 {
                    let (a, b) = (k, (k + 1) % 4);
                    if (vals[a] >= level) != (vals[b] >= level) {
                        crossings.push(lerp(
                            pt(corners[a].0, corners[a].1),
                            pt(corners[b].0, corners[b].1),
                            vals[a],
                            vals[b],
                        ));
                    }
                }
                for pair in crossings.chunks(2) {
                    if let [a, b] = pair {
                        out.push([*a, *b]);
                    }
                }
            }
        }
        out
    }

    /// `size,sigma,p,n_detect,n_total`
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = String::from("size,sigma,p,n_detect,n_total\n");
        for c in &self.cells {
            text.push_str(&format!(
                "{},{},{},{},{}\n",
                fmt_num(c.size),
                fmt_num(c.sigma),
                fmt_num(c.probability()),
                c.detected,
                c.total
            ));
        }
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// `{"method": ..., "contours": [{"level": p, "segments": [...]}]}`
    pub fn contours_json(&self) -> serde_json::Value {
        let contours: Vec<_> = self
            .contour_levels
            .iter()
            .map(|&l| serde_json::json!({ "level": l, "segments": self.contour(l) }))
            .collect();
        serde_json::json!({ "method": self.method.tag(), "contours": contours })
    }
}

fn hits(flagged: &[usize], index: usize) -> bool {
    flagged.iter().any(|&f| f.abs_diff(index) <= DETECTION_WINDOW)
}

/// Verdicts of every requested method on one synthetic dataset. The penalty
/// grid is shared by both hybrid rules and anchors the Bayesian priors.
fn replicate(
    config: &StudyConfig,
    methods: &[Method],
    size: f64,
    sigma: f64,
    cell: usize,
    rep: usize,
) -> Result<Vec<bool>> {
    let mut rng = config.rng(cell, rep);
    let series = synth_cycle(&config.trend, size, config.disturbance_index, sigma, &mut rng)?;
    let prep = prepare(&series)?;
    let hybrid = run_hybrid(&prep, &config.hybrid)?;
    let mut out = Vec::with_capacity(methods.len());
    for m in methods {
        let flagged = match m {
            Method::HybridElbow | Method::HybridAicc => {
                let crit = if *m == Method::HybridElbow {
                    Criterion::Elbow
                } else {
                    Criterion::Aicc
                };
                let fit = hybrid.fit(crit);
                fit.flagged_columns(config.threshold)
                    .into_iter()
                    .map(|j| hybrid.basis.column_times[j])
                    .collect::<Vec<_>>()
            }
            Method::Bayes => {
                let model = bayes_model(&prep, &config.bayes)?;
                let mut opts = config.bayes;
                opts.chain = ChainConfig {
                    seed: rng.random(),
                    ..config.bayes.chain
                };
                let samples = run_bayes(&prep, &model, hybrid.anchored_priors(), &opts)?;
                detect_bayes(&samples, config.threshold, opts.level).flagged
            }
        };
        out.push(hits(&flagged, config.disturbance_index));
    }
    Ok(out)
}

/// Surfaces for several methods on common datasets.
pub fn detection_surfaces(config: &StudyConfig, methods: &[Method]) -> Result<Vec<DetectionSurface>> {
    config.validate()?;
    let ns = config.sigmas.len();
    let jobs: Vec<(usize, usize)> = (0..config.disturbance_sizes.len() * ns)
        .flat_map(|cell| (0..config.replicates).map(move |rep| (cell, rep)))
        .collect();
    let verdicts: Vec<(usize, Result<Vec<bool>>)> = jobs
        .par_iter()
        .map(|&(cell, rep)| {
            let size = config.disturbance_sizes[cell / ns];
            let sigma = config.sigmas[cell % ns];
            (cell, replicate(config, methods, size, sigma, cell, rep))
        })
        .collect();

    let mut surfaces: Vec<DetectionSurface> = methods
        .iter()
        .map(|&method| DetectionSurface {
            method,
            sizes: config.disturbance_sizes.clone(),
            sigmas: config.sigmas.clone(),
            cells: config
                .disturbance_sizes
                .iter()
                .flat_map(|&size| {
                    config.sigmas.iter().map(move |&sigma| SurfaceCell {
                        size,
                        sigma,
                        detected: 0,
                        total: 0,
                        failed: 0,
                    })
                })
                .collect(),
            contour_levels: CONTOUR_LEVELS.to_vec(),
        })
        .collect();
    for (cell, verdict) in verdicts {
        match verdict {
            Ok(v) => {
                for (s, hit) in surfaces.iter_mut().zip(v) {
                    s.cells[cell].total += 1;
                    s.cells[cell].detected += hit as usize;
                }
            }
            Err(e) => {
                log::debug!("replicate in cell {cell} failed: {e}");
                for s in surfaces.iter_mut() {
                    s.cells[cell].failed += 1;
                }
            }
        }
    }
    for s in &surfaces {
        for c in &s.cells {
            if c.failed * 20 > c.failed + c.total {
                log::warn!(
                    "{}: {} of {} replicates failed at size {}, sigma {}",
                    s.method.tag(),
                    c.failed,
                    c.failed + c.total,
                    c.size,
                    c.sigma
                );
            }
        }
    }
    Ok(surfaces)
}

pub fn detection_surface(config: &StudyConfig) -> Result<DetectionSurface> {
    Ok(detection_surfaces(config, &[config.method])?.remove(0))
}
