//! Bregman divergences.
//!
//! A divergence is generated by a strictly convex function `phi`:
//!
//! ```text
//! d(x, mu) = phi(x) - phi(mu) - <grad phi(mu), x - mu>
//! ```
//!
//! Two generators are provided. `phi(x) = <x, x>` gives the squared Euclidean
//! distance; `phi(x) = <x, log x>` gives the generalized I-divergence, which
//! reduces to the Kullback-Leibler divergence on the probability simplex.
//! For every Bregman divergence the expected divergence `E[d(X, mu)]` is
//! minimized by `mu = E[X]`, which is what lets the annealing updates stay
//! gradient free.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{OdaError, Result};

/// Smallest coordinate accepted by the I-divergence domain guard.
pub const I_DIVERGENCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DivergenceKind {
    #[serde(rename = "sq_euclidean")]
    SquaredEuclidean,
    #[serde(rename = "gen_i_divergence")]
    GeneralizedIDivergence,
}

impl DivergenceKind {
    pub fn token(self) -> &'static str {
        match self {
            DivergenceKind::SquaredEuclidean => "sq_euclidean",
            DivergenceKind::GeneralizedIDivergence => "gen_i_divergence",
        }
    }
}

impl fmt::Display for DivergenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for DivergenceKind {
    type Err = OdaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sq_euclidean" => Ok(DivergenceKind::SquaredEuclidean),
            "gen_i_divergence" => Ok(DivergenceKind::GeneralizedIDivergence),
            other => Err(OdaError::InvalidArgument(format!(
                "unknown divergence token {other:?}"
            ))),
        }
    }
}

/// A Bregman divergence over vectors of a fixed dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Divergence {
    pub kind: DivergenceKind,
    pub dimension: usize,
}

impl Divergence {
    pub fn new(kind: DivergenceKind, dimension: usize) -> Result<Self> {
        if dimension == 0 {
            return Err(OdaError::InvalidArgument(
                "divergence dimension must be positive".into(),
            ));
        }
        Ok(Self { kind, dimension })
    }

    pub fn squared_euclidean(dimension: usize) -> Self {
        Self {
            kind: DivergenceKind::SquaredEuclidean,
            dimension: dimension.max(1),
        }
    }

    pub fn i_divergence(dimension: usize) -> Self {
        Self {
            kind: DivergenceKind::GeneralizedIDivergence,
            dimension: dimension.max(1),
        }
    }

    /// Checks length and per-coordinate domain membership.
    pub fn validate(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dimension {
            return Err(OdaError::DimensionMismatch {
                expected: self.dimension,
                got: x.len(),
            });
        }
        for (index, &value) in x.iter().enumerate() {
            let ok = match self.kind {
                DivergenceKind::SquaredEuclidean => value.is_finite(),
                DivergenceKind::GeneralizedIDivergence => {
                    value.is_finite() && value > I_DIVERGENCE_FLOOR
                }
            };
            if !ok {
                return Err(OdaError::Domain { index, value });
            }
        }
        Ok(())
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.validate(x).is_ok()
    }

    pub fn phi(&self, x: &[f64]) -> Result<f64> {
        self.validate(x)?;
        Ok(match self.kind {
            DivergenceKind::SquaredEuclidean => x.iter().map(|v| v * v).sum(),
            DivergenceKind::GeneralizedIDivergence => x.iter().map(|v| v * v.ln()).sum(),
        })
    }

    /// Gradient of the generator, used only by the finite-difference checks.
    pub fn grad_phi(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.validate(x)?;
        Ok(match self.kind {
            DivergenceKind::SquaredEuclidean => x.iter().map(|v| 2.0 * v).collect(),
            DivergenceKind::GeneralizedIDivergence => x.iter().map(|v| v.ln() + 1.0).collect(),
        })
    }

    pub fn bregman(&self, x: &[f64], mu: &[f64]) -> Result<f64> {
        self.validate(x)?;
        self.validate(mu)?;
        Ok(self.distance_unchecked(x, mu))
    }

    /// Divergence without domain checks. Callers must have validated both
    /// arguments; the hot paths validate once per observation.
    #[inline]
    pub(crate) fn distance_unchecked(&self, x: &[f64], mu: &[f64]) -> f64 {
        match self.kind {
            DivergenceKind::SquaredEuclidean => x
                .iter()
                .zip(mu)
                .map(|(a, b)| {
                    let d = a - b;
                    d * d
                })
                .sum(),
            DivergenceKind::GeneralizedIDivergence => x
                .iter()
                .zip(mu)
                .map(|(a, b)| a * (a.ln() - b.ln()) - (a - b))
                .sum::<f64>()
                .max(0.0),
        }
    }

    /// Derivative of `d(x, mu)` with respect to `mu`: `-H(mu) (x - mu)`.
    pub fn grad_second_arg(&self, x: &[f64], mu: &[f64]) -> Result<Vec<f64>> {
        self.validate(x)?;
        self.validate(mu)?;
        Ok(match self.kind {
            DivergenceKind::SquaredEuclidean => {
                x.iter().zip(mu).map(|(a, b)| -2.0 * (a - b)).collect()
            }
            DivergenceKind::GeneralizedIDivergence => {
                x.iter().zip(mu).map(|(a, b)| -(a - b) / b).collect()
            }
        })
    }

    /// Dense Hessian of `phi` at `mu`. Only the bifurcation diagnostic uses it.
    pub fn hessian_phi(&self, mu: &[f64]) -> Result<DMatrix<f64>> {
        self.validate(mu)?;
        let diag: Vec<f64> = match self.kind {
            DivergenceKind::SquaredEuclidean => vec![2.0; self.dimension],
            DivergenceKind::GeneralizedIDivergence => mu.iter().map(|v| 1.0 / v).collect(),
        };
        Ok(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag)))
    }
}
