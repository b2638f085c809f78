//! End-to-end analyses of one series, shared by the simulation harness and
//! the command line tool.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::basis::{step_basis, BasisVariant, StepBasis};
use crate::bhm::{
    detect_bayes, orthogonalize, run_chains, ChainConfig, GibbsSampler, OrthoOperators, PosteriorSamples, Priors,
    DEFAULT_DELTA, DEFAULT_LEVEL,
};
use crate::error::Result;
use crate::hybrid::{HybridFit, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::report::DetectionReport;
use crate::scalar::Real;
use crate::select::{
    aicc_select, default_grids, elbow_select, grid_search_with, PenaltyGrid, Selection, DEFAULT_GRID_POINTS,
};
use crate::spline::{build_design, SplineDesign};
use crate::timeseries::{standardize_times, TimeScale, TimeSeries};

/// A series on standardized time with its spline design.
#[derive(Debug, Clone)]
pub struct Prepared<T: Real> {
    pub original: TimeSeries<T>,
    pub scale: TimeScale<T>,
    pub design: SplineDesign<T>,
    pub y: DVector<T>,
}

pub fn prepare<T: Real>(series: &TimeSeries<T>) -> Result<Prepared<T>> {
    let (std, scale) = standardize_times(series);
    let design = build_design(std.times())?;
    Ok(Prepared {
        original: series.clone(),
        scale,
        design,
        y: DVector::from_column_slice(series.values()),
    })
}

impl<T: Real> Prepared<T> {
    pub fn original_times(&self) -> Vec<f64> {
        self.original.times().iter().map(|t| t.as_f64()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Elbow,
    Aicc,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HybridOptions {
    pub grid_points: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub variant: BasisVariant,
}

impl Default for HybridOptions {
    fn default() -> Self {
        Self {
            grid_points: DEFAULT_GRID_POINTS,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            variant: BasisVariant::Forward,
        }
    }
}

/// Full penalty grid with both selections.
#[derive(Debug, Clone)]
pub struct HybridOutcome<T: Real> {
    pub basis: StepBasis<T>,
    pub grid: PenaltyGrid<T>,
    pub elbow: Selection<T>,
    pub aicc: Selection<T>,
}

impl<T: Real> HybridOutcome<T> {
    pub fn selection(&self, criterion: Criterion) -> &Selection<T> {
        match criterion {
            Criterion::Elbow => &self.elbow,
            Criterion::Aicc => &self.aicc,
        }
    }

    pub fn fit(&self, criterion: Criterion) -> &HybridFit<T> {
        &self.grid.cells[self.selection(criterion).index].fit
    }

    pub fn report(&self, criterion: Criterion, threshold: f64, times: &[f64]) -> DetectionReport {
        let tag = match criterion {
            Criterion::Elbow => "elbow",
            Criterion::Aicc => "aicc",
        };
        let mut r = DetectionReport::from_hybrid(tag, self.fit(criterion), &self.basis.column_times, threshold);
        r.diagnostics
            .insert("nonconverged_cells".into(), self.grid.nonconverged() as f64);
        r.with_times(times)
    }

    /// Priors for the Bayesian model centred on the AICc fit.
    pub fn anchored_priors(&self) -> Priors<T> {
        let fit = self.fit(Criterion::Aicc);
        let sigma2 = fit.sse() / T::from_count(fit.residual.len());
        Priors::from_hybrid(fit.lambda, fit.omega, sigma2)
    }
}

/// Default grids, grid search and both selection rules.
pub fn run_hybrid<T: Real>(prep: &Prepared<T>, opts: &HybridOptions) -> Result<HybridOutcome<T>> {
    let basis = step_basis(prep.design.n(), opts.variant)?;
    let (lambdas, omegas) = default_grids(&prep.y, &prep.design, &basis, opts.grid_points)?;
    let grid = grid_search_with(
        &prep.y,
        &prep.design,
        &basis,
        &lambdas,
        &omegas,
        T::lit(opts.tol),
        opts.max_iter,
    )?;
    let elbow = elbow_select(&grid)?;
    let aicc = aicc_select(&grid)?;
    Ok(HybridOutcome {
        basis,
        grid,
        elbow,
        aicc,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BayesOptions {
    pub chain: ChainConfig,
    pub variant: BasisVariant,
    pub delta: f64,
    pub level: f64,
    /// Run the plain, non-orthogonalized model instead.
    pub plain: bool,
}

impl Default for BayesOptions {
    fn default() -> Self {
        Self {
            chain: ChainConfig::default(),
            variant: BasisVariant::Centered,
            delta: DEFAULT_DELTA,
            level: DEFAULT_LEVEL,
            plain: false,
        }
    }
}

/// Step basis and operators for the Bayesian model.
pub struct BayesModel<T: Real> {
    pub basis: StepBasis<T>,
    pub ops: OrthoOperators<T>,
}

pub fn bayes_model<T: Real>(prep: &Prepared<T>, opts: &BayesOptions) -> Result<BayesModel<T>> {
    let basis = step_basis(prep.design.n(), opts.variant)?;
    let ops = if opts.plain {
        OrthoOperators::plain(&prep.design, &basis)?
    } else {
        orthogonalize(&prep.design, &basis, T::lit(opts.delta))?
    };
    Ok(BayesModel { basis, ops })
}

pub fn run_bayes<T: Real>(
    prep: &Prepared<T>,
    model: &BayesModel<T>,
    priors: Priors<T>,
    opts: &BayesOptions,
) -> Result<PosteriorSamples<T>> {
    let sampler = GibbsSampler::new(&prep.y, &prep.design, &model.basis, &model.ops, priors)?;
    run_chains(&sampler, &opts.chain)
}

pub fn bayes_report<T: Real>(
    samples: &PosteriorSamples<T>,
    threshold: f64,
    opts: &BayesOptions,
    times: &[f64],
) -> DetectionReport {
    detect_bayes(samples, threshold, opts.level).with_times(times)
}
