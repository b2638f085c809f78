//! Penalty grid search with elbow-simplex and AICc selection.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::basis::StepBasis;
use crate::error::{Error, Result};
use crate::hybrid::{
    assemble_fit, count_active, fista_gram, residual_spectrum, HybridFit, LassoGram, DEFAULT_MAX_ITER, DEFAULT_TOL,
};
use crate::linalg::projection;
use crate::scalar::Real;
use crate::spline::SplineDesign;
use crate::timeseries::fmt_num;

/// Points per axis of the default grids.
pub const DEFAULT_GRID_POINTS: usize = 25;
/// Ratio between the smallest and largest default `λ`.
pub const LAMBDA_SPAN: f64 = 1e-4;

/// One `(λ, ω)` cell.
#[derive(Debug, Clone)]
pub struct GridCell<T: Real> {
    pub lambda: T,
    pub omega: T,
    pub fit: HybridFit<T>,
    /// RMSE of the fit.
    pub e: T,
    /// `tr(A(ω)) + S`.
    pub n_edf: T,
    /// Active step count.
    pub s: usize,
    pub admissible: bool,
}

/// Cells stored row-major by `ω`, then `λ` in the order supplied.
#[derive(Debug, Clone)]
pub struct PenaltyGrid<T: Real> {
    pub lambdas: Vec<T>,
    pub omegas: Vec<T>,
    pub cells: Vec<GridCell<T>>,
    /// RMSE of the least-squares straight line.
    pub e0: T,
    pub n: usize,
}

impl<T: Real> PenaltyGrid<T> {
    pub fn cell(&self, lambda_idx: usize, omega_idx: usize) -> &GridCell<T> {
        &self.cells[omega_idx * self.lambdas.len() + lambda_idx]
    }

    /// `1 − (N/n + S/n + E/E0)`, `None` for inadmissible cells.
    pub fn distance(&self, cell: &GridCell<T>) -> Option<T> {
        if !cell.admissible {
            return None;
        }
        let n = T::from_count(self.n);
        let ratio = if self.e0 > T::zero() {
            cell.e / self.e0
        } else {
            T::zero()
        };
        Some(T::one() - (cell.n_edf / n + T::from_count(cell.s) / n + ratio))
    }

    /// `ln(SSE/n) + (n+p)/(n−p)` with `p = N`; `None` when `p ≥ n`.
    pub fn aicc(&self, cell: &GridCell<T>) -> Option<T> {
        let n = T::from_count(self.n);
        let p = cell.n_edf;
        if p >= n {
            return None;
        }
        Some(aicc_score(cell.e * cell.e, p, n))
    }

    pub fn nonconverged(&self) -> usize {
        self.cells.iter().filter(|c| !c.fit.converged).count()
    }

    /// Long-format table: `lambda,omega,E,N,S,distance,aicc`, blank where a
    /// score is undefined.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(out, "lambda,omega,E,N,S,distance,aicc").map_err(io)?;
        let opt = |v: Option<T>| v.map(|x| fmt_num(x.as_f64())).unwrap_or_default();
        for cell in &self.cells {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                fmt_num(cell.lambda.as_f64()),
                fmt_num(cell.omega.as_f64()),
                fmt_num(cell.e.as_f64()),
                fmt_num(cell.n_edf.as_f64()),
                cell.s,
                opt(self.distance(cell)),
                opt(self.aicc(cell)),
            )
            .map_err(io)?;
        }
        out.flush().map_err(io)
    }
}

/// `ln(mse) + (n+p)/(n−p)` where `mse = SSE/n`.
pub fn aicc_score<T: Real>(mse: T, p: T, n: T) -> T {
    mse.ln() + (n + p) / (n - p)
}

/// Selected cell plus the full score surface (row-major like the cells).
#[derive(Debug, Clone)]
pub struct Selection<T: Real> {
    pub lambda: T,
    pub omega: T,
    pub index: usize,
    pub surface: Vec<Option<T>>,
}

impl<T: Real> Selection<T> {
    pub fn cell<'a>(&self, grid: &'a PenaltyGrid<T>) -> &'a GridCell<T> {
        &grid.cells[self.index]
    }
}

/// `tr(Φ S(ω) Φ') + #{|γ̂_j| > 1e-10}`.
pub fn edf_total<T: Real>(design: &SplineDesign<T>, omega: T, gamma: &DVector<T>) -> Result<T> {
    Ok(design.edf(omega)? + T::from_count(count_active(gamma)))
}

fn log_space<T: Real>(lo: T, hi: T, points: usize) -> Vec<T> {
    if points == 1 {
        return vec![hi];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..points)
        .map(|i| (a + (b - a) * T::from_count(i) / T::from_count(points - 1)).exp())
        .collect()
}

/// Data-adaptive grids: `ω` spans smoothers with edf from `n/2` down to 3,
/// and `λ` runs from `λ_kkt·1e-4` to `λ_kkt`, the largest zero-solution
/// threshold over the `ω` grid.
pub fn default_grids<T: Real>(
    y: &DVector<T>,
    design: &SplineDesign<T>,
    basis: &StepBasis<T>,
    points: usize,
) -> Result<(Vec<T>, Vec<T>)> {
    let n = T::from_count(design.n());
    let two = T::lit(2.0);
    // tiny series cannot host both targets; keep them strictly inside (2, n)
    let lo_edf = T::lit(3.0).min(two + (n - two) / T::lit(4.0));
    let hi_edf = (n / two).max(lo_edf + (n - lo_edf) / two);
    let omega_smooth = design.omega_for_edf(lo_edf)?;
    let omega_rough = design.omega_for_edf(hi_edf)?;
    let omegas = log_space(omega_rough, omega_smooth, points);
    let row = RowSolver::new(y, design, basis)?;
    // the zero point grows with ω; the top λ must empty every row
    let mut kkt = T::zero();
    for &omega in &omegas {
        kkt = kkt.max(row.kkt_lambda(omega)?);
    }
    if !(kkt > T::zero()) {
        return Err(Error::InvalidInput(
            "no step signal survives whitening; lambda grid is degenerate".into(),
        ));
    }
    let lambdas = log_space(kkt * T::lit(LAMBDA_SPAN), kkt, points);
    Ok((lambdas, omegas))
}

/// Shared pieces of every `ω` row: `B = U'Ψ`, `U'y`.
struct RowSolver<'a, T: Real> {
    y: &'a DVector<T>,
    design: &'a SplineDesign<T>,
    basis: &'a StepBasis<T>,
    b: DMatrix<T>,
    uy: DVector<T>,
}

impl<'a, T: Real> RowSolver<'a, T> {
    fn new(y: &'a DVector<T>, design: &'a SplineDesign<T>, basis: &'a StepBasis<T>) -> Result<Self> {
        for got in [y.len(), basis.n()] {
            if got != design.n() {
                return Err(Error::DimensionMismatch {
                    expected: design.n(),
                    got,
                });
            }
        }
        let u = design.penalty_eigenvectors();
        Ok(Self {
            y,
            design,
            basis,
            b: u.tr_mul(&basis.psi),
            uy: u.tr_mul(y),
        })
    }

    /// `G = Ψ'W²Ψ = B' diag(μ) B` and `c = B' diag(μ) U'y` with `μ` the
    /// spectrum of `I − A(ω)`.
    fn gram(&self, omega: T) -> Result<LassoGram<T>> {
        let mu = residual_spectrum(self.design, omega)?;
        let root = mu.map(|m| m.sqrt());
        let mut bs = self.b.clone();
        for (i, mut row) in bs.row_iter_mut().enumerate() {
            row *= root[i];
        }
        let g = bs.tr_mul(&bs);
        let wy = self.uy.component_mul(&root);
        let c = bs.tr_mul(&wy);
        LassoGram::new(g, c, wy.norm_squared())
    }

    /// `2‖Ψ'W²y‖_∞` without forming the Gram matrix.
    fn kkt_lambda(&self, omega: T) -> Result<T> {
        let mu = residual_spectrum(self.design, omega)?;
        let c = self.b.tr_mul(&self.uy.component_mul(&mu));
        Ok(T::lit(2.0) * c.amax())
    }

    fn row(&self, omega: T, lambdas: &[T], tol: T, max_iter: usize) -> Result<Vec<HybridFit<T>>> {
        let prob = self.gram(omega)?;
        let edf = self.design.edf(omega)?;
        let mut order: Vec<usize> = (0..lambdas.len()).collect();
        order.sort_by(|&a, &b| lambdas[b].partial_cmp(&lambdas[a]).unwrap());
        let mut fits: Vec<Option<HybridFit<T>>> = vec![None; lambdas.len()];
        let mut warm = DVector::zeros(self.basis.ncols());
        for i in order {
            let out = fista_gram(&prob, lambdas[i], &warm, tol, max_iter)?;
            warm.copy_from(&out.gamma);
            let fit = assemble_fit(self.y, self.design, self.basis, out, lambdas[i], omega, edf)?;
            fits[i] = Some(fit);
        }
        Ok(fits.into_iter().map(|f| f.expect("every lambda visited")).collect())
    }
}

/// Fits every `(λ, ω)` cell with the default FISTA tolerance.
pub fn grid_search<T: Real>(
    y: &DVector<T>,
    design: &SplineDesign<T>,
    basis: &StepBasis<T>,
    lambdas: &[T],
    omegas: &[T],
) -> Result<PenaltyGrid<T>> {
    grid_search_with(y, design, basis, lambdas, omegas, T::lit(DEFAULT_TOL), DEFAULT_MAX_ITER)
}

/// Rows in `ω` run in parallel; within a row `λ` is visited from largest to
/// smallest with warm starts.
pub fn grid_search_with<T: Real>(
    y: &DVector<T>,
    design: &SplineDesign<T>,
    basis: &StepBasis<T>,
    lambdas: &[T],
    omegas: &[T],
    tol: T,
    max_iter: usize,
) -> Result<PenaltyGrid<T>> {
    if lambdas.is_empty() || omegas.is_empty() {
        return Err(Error::InvalidInput("penalty grids must be nonempty".into()));
    }
    for &l in lambdas {
        if !(l > T::zero() && l.is_finite()) {
            return Err(Error::OutOfRange {
                name: "lambda",
                value: l.as_f64(),
            });
        }
    }
    let solver = RowSolver::new(y, design, basis)?;
    let rows: Vec<Vec<HybridFit<T>>> = omegas
        .par_iter()
        .map(|&omega| solver.row(omega, lambdas, tol, max_iter))
        .collect::<Result<_>>()?;

    let n = design.n();
    let ols = projection(&design.x)? * y;
    let e0 = ((y - ols).norm_squared() / T::from_count(n)).sqrt();
    let nf = T::from_count(n);
    let cells = rows
        .into_iter()
        .flatten()
        .map(|fit| GridCell {
            lambda: fit.lambda,
            omega: fit.omega,
            e: fit.rmse,
            n_edf: fit.edf_total,
            s: fit.n_active,
            admissible: fit.edf_total <= nf,
            fit,
        })
        .collect::<Vec<_>>();
    let skipped = cells.iter().filter(|c| !c.fit.converged).count();
    if skipped > 0 {
        log::warn!("{skipped} of {} grid cells hit the FISTA iteration cap", cells.len());
    }
    Ok(PenaltyGrid {
        lambdas: lambdas.to_vec(),
        omegas: omegas.to_vec(),
        cells,
        e0,
        n,
    })
}

/// Picks the best cell by `better(score_a, score_b)`, ties going to larger
/// `λ` then larger `ω`.
fn argbest<T: Real>(
    grid: &PenaltyGrid<T>,
    surface: Vec<Option<T>>,
    better: impl Fn(T, T) -> bool,
) -> Result<Selection<T>> {
    let mut best: Option<usize> = None;
    for (i, score) in surface.iter().enumerate() {
        let Some(s) = *score else { continue };
        if s.as_f64().is_nan() {
            continue;
        }
        best = match best {
            None => Some(i),
            Some(b) => {
                let sb = surface[b].unwrap();
                let (ci, cb) = (&grid.cells[i], &grid.cells[b]);
                let wins = better(s, sb)
                    || (s == sb && (ci.lambda > cb.lambda || (ci.lambda == cb.lambda && ci.omega > cb.omega)));
                Some(if wins { i } else { b })
            }
        };
    }
    let index = best.ok_or(Error::NoAdmissibleCell)?;
    Ok(Selection {
        lambda: grid.cells[index].lambda,
        omega: grid.cells[index].omega,
        index,
        surface,
    })
}

/// Cell farthest below the simplex plane `N/n + S/n + E/E0 = 1`.
pub fn elbow_select<T: Real>(grid: &PenaltyGrid<T>) -> Result<Selection<T>> {
    let surface = grid.cells.iter().map(|c| grid.distance(c)).collect();
    argbest(grid, surface, |a, b| a > b)
}

/// Cell minimizing AICc among those with `N < n`.
pub fn aicc_select<T: Real>(grid: &PenaltyGrid<T>) -> Result<Selection<T>> {
    let surface = grid.cells.iter().map(|c| grid.aicc(c)).collect();
    argbest(grid, surface, |a, b| a < b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{step_basis, BasisVariant};
    use crate::hybrid::hybrid_fit;
    use crate::spline::build_design;

    fn setup(n: usize) -> (DVector<f64>, SplineDesign<f64>, StepBasis<f64>) {
        let t: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let d = build_design(&t).unwrap();
        let b = step_basis(n, BasisVariant::Forward).unwrap();
        let y = DVector::from_fn(n, |i, _| {
            (3.0 * t[i]).sin() + if i >= n / 2 { 0.8 } else { 0.0 } + 0.05 * (((i * 7919) % 101) as f64 / 101.0 - 0.5)
        });
        (y, d, b)
    }

    #[test]
    fn single_cell_matches_hybrid_fit() {
        let (y, d, b) = setup(40);
        let grid = grid_search_with(&y, &d, &b, &[0.3], &[1e-5], 1e-10, 100_000).unwrap();
        let fit = hybrid_fit(&y, &d, &b, 0.3, 1e-5, 1e-10, 100_000).unwrap();
        assert_eq!(grid.cells.len(), 1);
        assert!((&grid.cells[0].fit.gamma_hat - &fit.gamma_hat).amax() < 1e-7);
        assert!((grid.cells[0].e - fit.rmse).abs() < 1e-8);
    }

    #[test]
    fn kkt_row_is_empty_and_error_decreases_with_lambda() {
        let (y, d, b) = setup(40);
        let (lambdas, omegas) = default_grids(&y, &d, &b, 6).unwrap();
        let grid = grid_search_with(&y, &d, &b, &lambdas, &omegas, 1e-9, 200_000).unwrap();
        for oi in 0..omegas.len() {
            assert_eq!(grid.cell(5, oi).s, 0);
        }
        for oi in 0..omegas.len() {
            for li in 1..lambdas.len() {
                assert!(grid.cell(li - 1, oi).e <= grid.cell(li, oi).e + 1e-8);
            }
        }
        for c in grid.cells.iter().filter(|c| c.admissible) {
            assert!(c.e <= grid.e0 + 1e-8);
            assert!(c.s < 40);
        }
    }

    #[test]
    fn aicc_prefers_fewer_parameters_at_equal_fit() {
        assert!(aicc_score(0.1, 5.0, 100.0) < aicc_score(0.1, 10.0, 100.0));
        assert!(aicc_score(0.1, 99.999, 100.0) > 1e4);
    }

    #[test]
    fn simplex_plane_has_zero_distance() {
        let (y, d, b) = setup(30);
        let mut grid = grid_search(&y, &d, &b, &[0.5], &[1e-4]).unwrap();
        let c = &mut grid.cells[0];
        c.n_edf = 10.0;
        c.s = 10;
        c.e = grid.e0 / 3.0;
        let c = grid.cells[0].clone();
        assert!(grid.distance(&c).unwrap().abs() < 1e-12);
    }

    #[test]
    fn selection_is_scale_free() {
        let (y, d, b) = setup(40);
        let (lambdas, omegas) = default_grids(&y, &d, &b, 5).unwrap();
        let g1 = grid_search_with(&y, &d, &b, &lambdas, &omegas, 1e-10, 200_000).unwrap();
        let y10 = &y * 10.0;
        let l10: Vec<f64> = lambdas.iter().map(|l| l * 10.0).collect();
        let g10 = grid_search_with(&y10, &d, &b, &l10, &omegas, 1e-9, 200_000).unwrap();
        assert_eq!(elbow_select(&g1).unwrap().index, elbow_select(&g10).unwrap().index);
    }

    #[test]
    fn no_admissible_cell_is_an_error() {
        let (y, d, b) = setup(20);
        let mut grid = grid_search(&y, &d, &b, &[0.5], &[1e-4]).unwrap();
        grid.cells[0].admissible = false;
        grid.cells[0].n_edf = 25.0;
        assert!(matches!(elbow_select(&grid), Err(Error::NoAdmissibleCell)));
        assert!(matches!(aicc_select(&grid), Err(Error::NoAdmissibleCell)));
    }

    #[test]
    fn edf_total_adds_active_count() {
        let (_, d, _) = setup(20);
        let g = DVector::from_vec(vec![0.0, 1.0, -2.0, 1e-12, 3.0]);
        let h1 = d.edf(1e-3).unwrap();
        assert!((edf_total(&d, 1e-3, &g).unwrap() - (h1 + 3.0)).abs() < 1e-12);
    }

    #[test]
    fn csv_export_has_header_and_rows() {
        let (y, d, b) = setup(20);
        let grid = grid_search(&y, &d, &b, &[0.1, 1.0], &[1e-5, 1e-3]).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        grid.write_csv(f.path()).unwrap();
        let text = std::fs::read_to_string(f.path()).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "lambda,omega,E,N,S,distance,aicc");
        assert_eq!(lines.len(), 5);
    }
}
