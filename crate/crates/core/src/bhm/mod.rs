//! Orthogonalized Bayesian hierarchical model sampled by pure Gibbs updates.

pub mod chains;
pub mod detect;
pub mod diagnostics;
pub mod ortho;
pub mod sampler;

pub use chains::{run_chains, ChainConfig, ChainDraws, ChainFailure, Diagnostics, PosteriorSamples};
pub use detect::{detect_bayes, DEFAULT_LEVEL, DEFAULT_THRESHOLD};
pub use ortho::{orthogonalize, OrthoOperators, DEFAULT_DELTA};
pub use sampler::{init_state, sample_inverse_gaussian, sample_step_prior, Frozen, GibbsSampler, MCMCState, Priors};
