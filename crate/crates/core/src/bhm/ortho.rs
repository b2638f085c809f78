//! Reparametrization that removes the confounding between the linear trend,
//! the step basis and the GP component.

use nalgebra::{DMatrix, DVector};

use crate::basis::StepBasis;
use crate::error::{Error, Result};
use crate::linalg::{projection, Cholesky};
use crate::scalar::Real;
use crate::spline::SplineDesign;

pub const DEFAULT_DELTA: f64 = 1e-8;

/// Operators of the orthogonalized model
/// `y = Xβ* + Ψ*γ* + Hg + ε`.
#[derive(Debug, Clone)]
pub struct OrthoOperators<T: Real> {
    pub p_x: DMatrix<T>,
    /// `(I − P_X) Ψ`
    pub psi_star: DMatrix<T>,
    /// `Ψ* (Ψ*'Ψ* + δI)^{-1} Ψ*'`
    pub p_psi_star: DMatrix<T>,
    /// `(Ψ*'Ψ* + δI)^{-1} Ψ*' (I − P_X)`
    pub j: DMatrix<T>,
    /// `(I − P_{Ψ*}) (I − P_X)`
    pub h: DMatrix<T>,
    pub delta: T,
    /// False for the plain model `y = Xβ + Ψγ + g + ε` (`Ψ* = Ψ`, `H = I`,
    /// `J = 0`), kept to show how badly it mixes.
    pub orthogonalized: bool,
}

pub fn orthogonalize<T: Real>(design: &SplineDesign<T>, basis: &StepBasis<T>, delta: T) -> Result<OrthoOperators<T>> {
    if !(delta > T::zero()) {
        return Err(Error::OutOfRange {
            name: "delta",
            value: delta.as_f64(),
        });
    }
    let n = design.n();
    if basis.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: basis.n(),
        });
    }
    let p_x = projection(&design.x)?;
    let resid = DMatrix::identity(n, n) - &p_x;
    let psi_star = &resid * &basis.psi;
    let mut gram = psi_star.tr_mul(&psi_star);
    for i in 0..gram.nrows() {
        gram[(i, i)] += delta;
    }
    let chol = Cholesky::factor(&gram, "Psi*'Psi* + delta I")?;
    let j = chol.solve_matrix(&psi_star.transpose()) * &resid;
    let p_psi_star = &psi_star * chol.solve_matrix(&psi_star.transpose());
    let p_psi_star = (&p_psi_star + p_psi_star.transpose()) * T::lit(0.5);
    let h = (DMatrix::identity(n, n) - &p_psi_star) * &resid;
    Ok(OrthoOperators {
        p_x,
        psi_star,
        p_psi_star,
        j,
        h,
        delta,
        orthogonalized: true,
    })
}

impl<T: Real> OrthoOperators<T> {
    /// The unreparametrized model.
    pub fn plain(design: &SplineDesign<T>, basis: &StepBasis<T>) -> Result<Self> {
        let n = design.n();
        if basis.n() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: basis.n(),
            });
        }
        Ok(Self {
            p_x: projection(&design.x)?,
            psi_star: basis.psi.clone(),
            p_psi_star: DMatrix::zeros(n, n),
            j: DMatrix::zeros(basis.ncols(), n),
            h: DMatrix::identity(n, n),
            delta: T::zero(),
            orthogonalized: false,
        })
    }

    /// Starred parameters from natural ones:
    /// `γ* = γ + Jg`, `β* = β + (X'X)^{-1}X'(Ψγ + g)`.
    pub fn to_starred(
        &self,
        design: &SplineDesign<T>,
        basis: &StepBasis<T>,
        beta: &DVector<T>,
        gamma: &DVector<T>,
        g: &DVector<T>,
    ) -> Result<(DVector<T>, DVector<T>)> {
        if !self.orthogonalized {
            return Ok((beta.clone(), gamma.clone()));
        }
        let gamma_star = gamma + &self.j * g;
        let shift = ols(&design.x, &(&basis.psi * gamma + g))?;
        Ok((beta + shift, gamma_star))
    }
}

/// `(X'X)^{-1} X' v`
pub(crate) fn ols<T: Real>(x: &DMatrix<T>, v: &DVector<T>) -> Result<DVector<T>> {
    let chol = Cholesky::factor(&x.tr_mul(x), "X'X")?;
    Ok(chol.solve(&x.tr_mul(v)))
}
