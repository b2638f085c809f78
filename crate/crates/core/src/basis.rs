//! Step-function basis for level-shift anomalies.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::timeseries::MIN_LEN;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BasisVariant {
    /// Column `c` is `1[i ≥ c+1]`.
    #[default]
    Forward,
    /// Steps measured away from the middle observation: columns left of the
    /// middle are `1[i ≤ j]`, columns right of it are `1[i ≥ j]`, and the
    /// middle column is dropped.
    Centered,
}

impl std::str::FromStr for BasisVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "forward" => Ok(Self::Forward),
            "centered" => Ok(Self::Centered),
            other => Err(Error::InvalidInput(format!("unknown basis variant `{other}`"))),
        }
    }
}

/// `n × (n−1)` step matrix `Ψ`.
#[derive(Debug, Clone)]
pub struct StepBasis<T: Real> {
    pub psi: DMatrix<T>,
    pub variant: BasisVariant,
    /// Row at which each column's step occurs; always `c + 1` for column `c`.
    pub column_times: Vec<usize>,
}

/// Zero-based index of the dropped middle column of the centered variant.
pub fn centered_middle(n: usize) -> usize {
    n.div_ceil(2) - 1
}

pub fn step_basis<T: Real>(n: usize, variant: BasisVariant) -> Result<StepBasis<T>> {
    if n < MIN_LEN {
        return Err(Error::TooShort {
            needed: MIN_LEN,
            got: n,
        });
    }
    let mut psi = DMatrix::zeros(n, n - 1);
    match variant {
        BasisVariant::Forward => {
            for c in 0..n - 1 {
                for i in c + 1..n {
                    psi[(i, c)] = T::one();
                }
            }
        }
        BasisVariant::Centered => {
            let m = centered_middle(n);
            for j in 0..n {
                if j < m {
                    for i in 0..=j {
                        psi[(i, j)] = T::one();
                    }
                } else if j > m {
                    for i in j..n {
                        psi[(i, j - 1)] = T::one();
                    }
                }
            }
        }
    }
    Ok(StepBasis {
        psi,
        variant,
        column_times: (1..n).collect(),
    })
}

impl<T: Real> StepBasis<T> {
    pub fn n(&self) -> usize {
        self.psi.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.psi.ncols()
    }
}

/// `Ψ γ`.
pub fn anomaly_signal<T: Real>(basis: &StepBasis<T>, gamma: &DVector<T>) -> Result<DVector<T>> {
    if gamma.len() != basis.ncols() {
        return Err(Error::DimensionMismatch {
            expected: basis.ncols(),
            got: gamma.len(),
        });
    }
    Ok(&basis.psi * gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn forward_n4() {
        let b = step_basis::<f64>(4, BasisVariant::Forward).unwrap();
        let expect = DMatrix::from_row_slice(4, 3, &[0., 0., 0., 1., 0., 0., 1., 1., 0., 1., 1., 1.]);
        assert_eq!(b.psi, expect);
        assert_eq!(b.column_times, vec![1, 2, 3]);
    }

    #[test]
    fn centered_n5_has_full_rank() {
        let b = step_basis::<f64>(5, BasisVariant::Centered).unwrap();
        assert_eq!(b.ncols(), 4);
        let expect = DMatrix::from_row_slice(
            5,
            4,
            &[
                1., 1., 0., 0., //
                0., 1., 0., 0., //
                0., 0., 0., 0., //
                0., 0., 1., 0., //
                0., 0., 1., 1.,
            ],
        );
        assert_eq!(b.psi, expect);
        assert_eq!(b.psi.rank(1e-12), 4);
    }

    #[test]
    fn every_forward_column_is_nonconstant() {
        let b = step_basis::<f64>(9, BasisVariant::Forward).unwrap();
        for col in b.psi.column_iter() {
            assert!(col.max() > col.min());
        }
    }

    #[test]
    fn too_short_rejected() {
        assert!(step_basis::<f64>(3, BasisVariant::Forward).is_err());
    }

    #[test]
    fn pulse_signal() {
        let b = step_basis::<f64>(6, BasisVariant::Forward).unwrap();
        let mut g = DVector::zeros(5);
        g[0] = 1.0;
        g[1] = -1.0;
        let a = anomaly_signal(&b, &g).unwrap();
        assert_eq!(a.as_slice(), &[0., 1., 0., 0., 0., 0.]);
        assert_eq!(anomaly_signal(&b, &DVector::zeros(5)).unwrap(), DVector::zeros(6));
        assert!(anomaly_signal(&b, &DVector::zeros(4)).is_err());
    }

    proptest! {
        #[test]
        fn signal_matches_column_sums(
            n in 4usize..30,
            seed in proptest::collection::vec(-5.0f64..5.0, 29),
            centered in any::<bool>(),
        ) {
            let variant = if centered { BasisVariant::Centered } else { BasisVariant::Forward };
            let b = step_basis::<f64>(n, variant).unwrap();
            let g = DVector::from_fn(n - 1, |j, _| seed[j]);
            let a = anomaly_signal(&b, &g).unwrap();
            for i in 0..n {
                let mut naive = 0.0;
                for j in 0..n - 1 {
                    naive += b.psi[(i, j)] * g[j];
                }
                prop_assert!((a[i] - naive).abs() <= 1e-12);
            }
            prop_assert_eq!(b.psi.rank(1e-9), n - 1);
        }
    }
}
