//! Seeded parallel chains, retained draws and convergence summaries.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::diagnostics::{ess, split_rhat};
use super::sampler::{init_state, GibbsSampler};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::timeseries::fmt_num;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainConfig {
    pub chains: usize,
    /// Sweeps per chain, burn-in included.
    pub iters: usize,
    pub burnin: usize,
    pub thin: usize,
    pub seed: u64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            chains: 4,
            iters: 1000,
            burnin: 200,
            thin: 1,
            seed: 0,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 {
            return Err(Error::InvalidInput("at least one chain is required".into()));
        }
        if self.iters <= self.burnin {
            return Err(Error::InvalidInput(format!(
                "iterations ({}) must exceed burn-in ({})",
                self.iters, self.burnin
            )));
        }
        if self.thin == 0 {
            return Err(Error::InvalidInput("thinning interval must be positive".into()));
        }
        Ok(())
    }

    pub fn retained(&self) -> usize {
        (self.iters - self.burnin).div_ceil(self.thin)
    }

    /// Independent stream for chain `c`.
    pub fn rng(&self, chain: usize) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(chain as u64);
        rng
    }
}

/// Back-transformed draws of one chain; matrices hold one draw per column.
#[derive(Debug, Clone)]
pub struct ChainDraws<T: Real> {
    pub beta: DMatrix<T>,
    pub gamma: DMatrix<T>,
    pub g: DMatrix<T>,
    pub sigma2: Vec<T>,
    pub lambda2: Vec<T>,
    pub omega: Vec<T>,
}

impl<T: Real> ChainDraws<T> {
    fn with_capacity(n: usize, p: usize, m: usize) -> Self {
        Self {
            beta: DMatrix::zeros(2, m),
            gamma: DMatrix::zeros(p, m),
            g: DMatrix::zeros(n, m),
            sigma2: Vec::with_capacity(m),
            lambda2: Vec::with_capacity(m),
            omega: Vec::with_capacity(m),
        }
    }

    pub fn len(&self) -> usize {
        self.sigma2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma2.is_empty()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ChainFailure {
    pub chain: usize,
    pub iteration: usize,
    pub message: String,
}

/// Per-parameter split-R̂ and effective sample size.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct Diagnostics {
    pub ess: BTreeMap<String, f64>,
    pub rhat: BTreeMap<String, f64>,
}

impl Diagnostics {
    /// Smallest ESS over the variance parameters `σ²`, `λ²`, `ω`.
    pub fn min_variance_ess(&self) -> f64 {
        ["sigma2", "lambda2", "omega"]
            .iter()
            .filter_map(|k| self.ess.get(*k).copied())
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone)]
pub struct PosteriorSamples<T: Real> {
    pub chains: Vec<ChainDraws<T>>,
    pub failed: Vec<ChainFailure>,
    pub config: ChainConfig,
    /// Row of each step column, for reporting.
    pub column_times: Vec<usize>,
    pub diagnostics: Diagnostics,
}

impl<T: Real> PosteriorSamples<T> {
    pub fn total_draws(&self) -> usize {
        self.chains.iter().map(ChainDraws::len).sum()
    }

    /// All retained draws of `γ_j`, chains concatenated.
    pub fn gamma_draws(&self, j: usize) -> Vec<f64> {
        self.chains
            .iter()
            .flat_map(|c| c.gamma.row(j).iter().map(|v| v.as_f64()).collect::<Vec<_>>())
            .collect()
    }

    /// Pointwise posterior mean of `Xβ + g` given the design matrix `X`.
    pub fn trend_mean(&self, x: &DMatrix<T>) -> DVector<T> {
        let n = x.nrows();
        let mut acc = DVector::zeros(n);
        for c in &self.chains {
            acc += x * c.beta.column_sum() + c.g.column_sum();
        }
        acc / T::from_count(self.total_draws().max(1))
    }

    /// Posterior mean of `γ`.
    pub fn gamma_mean(&self) -> DVector<T> {
        let p = self.column_times.len();
        let mut acc = DVector::zeros(p);
        for c in &self.chains {
            acc += c.gamma.column_sum();
        }
        acc / T::from_count(self.total_draws().max(1))
    }

    /// Scalar traces in long format: `chain,draw,sigma2,lambda2,omega,beta0,beta1`.
    pub fn write_trace_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(out, "chain,draw,sigma2,lambda2,omega,beta0,beta1").map_err(io)?;
        for (ci, c) in self.chains.iter().enumerate() {
            for d in 0..c.len() {
                writeln!(
                    out,
                    "{ci},{d},{},{},{},{},{}",
                    fmt_num(c.sigma2[d].as_f64()),
                    fmt_num(c.lambda2[d].as_f64()),
                    fmt_num(c.omega[d].as_f64()),
                    fmt_num(c.beta[(0, d)].as_f64()),
                    fmt_num(c.beta[(1, d)].as_f64()),
                )
                .map_err(io)?;
            }
        }
        out.flush().map_err(io)
    }
}

type Extract<T> = Box<dyn Fn(&ChainDraws<T>) -> Vec<f64>>;

fn scalar_diagnostics<T: Real>(chains: &[ChainDraws<T>]) -> Diagnostics {
    let mut diag = Diagnostics::default();
    let series: [(&str, Extract<T>); 5] = [
        ("sigma2", Box::new(|c| c.sigma2.iter().map(|v| v.as_f64()).collect())),
        ("lambda2", Box::new(|c| c.lambda2.iter().map(|v| v.as_f64()).collect())),
        ("omega", Box::new(|c| c.omega.iter().map(|v| v.as_f64()).collect())),
        (
            "beta0",
            Box::new(|c| c.beta.row(0).iter().map(|v| v.as_f64()).collect()),
        ),
        (
            "beta1",
            Box::new(|c| c.beta.row(1).iter().map(|v| v.as_f64()).collect()),
        ),
    ];
    for (name, get) in series {
        let values: Vec<Vec<f64>> = chains.iter().map(&get).collect();
        let refs: Vec<&[f64]> = values.iter().map(|v| v.as_slice()).collect();
        diag.ess.insert(name.to_string(), ess(&refs));
        diag.rhat.insert(name.to_string(), split_rhat(&refs));
    }
    diag
}

fn run_one<T: Real>(
    sampler: &GibbsSampler<'_, T>,
    config: &ChainConfig,
    chain: usize,
) -> std::result::Result<ChainDraws<T>, ChainFailure> {
    let fail = |iteration, e: Error| ChainFailure {
        chain,
        iteration,
        message: e.to_string(),
    };
    let mut rng = config.rng(chain);
    let mut state =
        init_state(&sampler.y, sampler.basis, sampler.design, sampler.ops, &sampler.priors).map_err(|e| fail(0, e))?;
    let n = sampler.n();
    let p = sampler.basis.ncols();
    let mut draws = ChainDraws::with_capacity(n, p, config.retained());
    let mut slot = 0;
    for it in 0..config.iters {
        sampler.gibbs_step(&mut state, &mut rng).map_err(|e| fail(it, e))?;
        let all_finite = state.sigma2.is_finite()
            && state.lambda2.is_finite()
            && state.omega.is_finite()
            && state.g.iter().all(|v| v.is_finite())
            && state.gamma_star.iter().all(|v| v.is_finite());
        if !all_finite {
            return Err(fail(it, Error::InvalidInput("non-finite draw".into())));
        }
        if it >= config.burnin && (it - config.burnin).is_multiple_of(config.thin) {
            let (beta, gamma) = sampler.back_transform(&state);
            draws.beta.set_column(slot, &beta);
            draws.gamma.set_column(slot, &gamma);
            draws.g.set_column(slot, &state.g);
            draws.sigma2.push(state.sigma2);
            draws.lambda2.push(state.lambda2);
            draws.omega.push(state.omega);
            slot += 1;
        }
    }
    Ok(draws)
}

/// Runs `config.chains` independent chains in parallel. Chains that fail
/// numerically are reported in `failed`; the run errors only if all fail.
pub fn run_chains<T: Real>(sampler: &GibbsSampler<'_, T>, config: &ChainConfig) -> Result<PosteriorSamples<T>> {
    config.validate()?;
    let results: Vec<_> = (0..config.chains)
        .into_par_iter()
        .map(|c| run_one(sampler, config, c))
        .collect();
    let mut chains = Vec::new();
    let mut failed = Vec::new();
    for r in results {
        match r {
            Ok(d) => chains.push(d),
            Err(f) => {
                log::warn!("chain {} failed at sweep {}: {}", f.chain, f.iteration, f.message);
                failed.push(f);
            }
        }
    }
    if chains.is_empty() {
        return Err(Error::AllChainsFailed(config.chains));
    }
    let diagnostics = scalar_diagnostics(&chains);
    Ok(PosteriorSamples {
        chains,
        failed,
        config: *config,
        column_times: sampler.basis.column_times.clone(),
        diagnostics,
    })
}
