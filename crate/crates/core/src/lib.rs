//! Smooth-trend plus sparse-step decomposition of univariate time series.
//!
//! Two estimators share one data model:
//!
//! * a hybrid penalized smoother (cubic smoothing spline with an L2 roughness
//!   penalty, step basis with an L1 penalty), reduced to a whitened LASSO and
//!   solved with FISTA, with elbow-simplex or AICc penalty selection;
//! * an orthogonalized Bayesian hierarchical model sampled with a pure Gibbs
//!   sampler (Gaussian-process trend, Laplace step coefficients through an
//!   exponential scale mixture).
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the aliases
//! at the crate root fix `f64`, which is what the command line tool uses.

// `!(x > 0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod bhm;
pub mod error;
pub mod hybrid;
pub mod linalg;
pub mod pipeline;
pub mod report;
pub mod scalar;
pub mod select;
pub mod separation;
pub mod simulation;
pub mod spline;
pub mod timeseries;

pub use basis::{anomaly_signal, step_basis, BasisVariant, StepBasis};
pub use bhm::{
    detect_bayes, init_state, orthogonalize, run_chains, sample_inverse_gaussian, ChainConfig, GibbsSampler, MCMCState,
    OrthoOperators, PosteriorSamples, Priors,
};
pub use error::{Error, Result};
pub use hybrid::{fista, hybrid_fit, soft_threshold, whitener, FistaOutcome, HybridFit, Whitener};
pub use report::DetectionReport;
pub use scalar::Real;
pub use select::{aicc_select, edf_total, elbow_select, grid_search, PenaltyGrid, Selection};
pub use separation::{separate_by_switch, separate_cycles, trim_cycle, SeparationConfig};
pub use simulation::{
    detection_surface, detection_surfaces, reference_trend, synth_cycle, DetectionSurface, Method, StudyConfig,
};
pub use spline::{build_design, gp_kernel, smoother, spline_fit, SplineDesign};
pub use timeseries::{load_series, save_series, standardize_times, Cycle, TimeScale, TimeSeries};

/// `f64` time series.
pub type Series = TimeSeries<f64>;
/// `f64` spline / GP design.
pub type Design = SplineDesign<f64>;
/// `f64` step basis.
pub type Basis = StepBasis<f64>;
/// `f64` hybrid fit.
pub type Fit = HybridFit<f64>;
/// `f64` penalty grid.
pub type Grid = PenaltyGrid<f64>;
/// `f64` orthogonalization operators.
pub type Operators = OrthoOperators<f64>;
/// `f64` posterior draws.
pub type Samples = PosteriorSamples<f64>;

/// Single-precision spline design.
pub type DesignF32 = SplineDesign<f32>;
/// Single-precision step basis.
pub type BasisF32 = StepBasis<f32>;
