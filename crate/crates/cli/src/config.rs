//! Option resolution: command-line flags override a JSON config file, which
//! overrides built-in defaults.

use std::path::Path;

use anyhow::{Context, Result};
use hsmooth::bhm::DEFAULT_THRESHOLD;
use hsmooth::pipeline::{BayesOptions, HybridOptions};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::{ChainFlags, HybridFlags, MethodArg};

pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalyzeConfig {
    pub method: MethodArg,
    pub threshold: f64,
    pub hybrid: HybridOptions,
    pub bayes: BayesOptions,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        Self {
            method: MethodArg::Aicc,
            threshold: DEFAULT_THRESHOLD,
            hybrid: HybridOptions::default(),
            bayes: BayesOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectConfig {
    pub hybrid: HybridOptions,
}

pub fn apply_hybrid(opts: &mut HybridOptions, flags: &HybridFlags) {
    if let Some(v) = flags.grid_points {
        opts.grid_points = v;
    }
    if let Some(v) = flags.tol {
        opts.tol = v;
    }
    if let Some(v) = flags.max_iter {
        opts.max_iter = v;
    }
}

pub fn apply_chain(opts: &mut BayesOptions, flags: &ChainFlags) {
    let c = &mut opts.chain;
    if let Some(v) = flags.chains {
        c.chains = v;
    }
    if let Some(v) = flags.iters {
        c.iters = v;
    }
    if let Some(v) = flags.burnin {
        c.burnin = v;
    }
    if let Some(v) = flags.thin {
        c.thin = v;
    }
    if let Some(v) = flags.seed {
        c.seed = v;
    }
    if let Some(v) = flags.level {
        opts.level = v;
    }
    if flags.plain {
        opts.plain = true;
    }
}
