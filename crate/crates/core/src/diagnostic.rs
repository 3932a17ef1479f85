//! Critical-temperature estimates for the bifurcation of a prototype.
//!
//! For a prototype `y` with conditional covariance `C` and generator Hessian
//! `H`, the second variation of the free energy loses definiteness when the
//! temperature crosses the largest eigenvalue of `H C`. For squared
//! Euclidean distance (`H = 2I`) that is twice the leading variance of the
//! cell, which is where the perturbation pairs are observed to separate.
//! The reciprocal of the same eigenvalue is kept as [`CriticalEstimate::determinant_root`]
//! for comparison with the `det[I - T H C] = 0` form.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::divergence::Divergence;
use crate::error::{OdaError, Result};
use crate::model::OdaModel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalEstimate {
    /// Largest eigenvalue of `H(y) C`.
    pub eigenvalue: f64,
}

impl CriticalEstimate {
    /// Temperature below which the prototype is expected to split.
    /// Zero when the cell has no spread.
    pub fn split_temperature(&self) -> f64 {
        self.eigenvalue
    }

    /// Root of `det[I - T H C] = 0`; `+inf` when the cell has no spread.
    pub fn determinant_root(&self) -> f64 {
        if self.eigenvalue > 0.0 {
            1.0 / self.eigenvalue
        } else {
            f64::INFINITY
        }
    }
}

/// Largest eigenvalue of `H C` for SPD `H`, via `L^T C L` with `H = L L^T`.
fn leading_eigenvalue(h: DMatrix<f64>, c: &DMatrix<f64>) -> Result<f64> {
    let chol = h
        .cholesky()
        .ok_or_else(|| OdaError::Numerical("Hessian is not positive definite".into()))?;
    let l = chol.l();
    let m = l.transpose() * c * &l;
    let sym = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    Ok(eig.eigenvalues.iter().copied().fold(0.0f64, f64::max))
}

fn weighted_covariance<'a>(
    y: &[f64],
    samples: impl Iterator<Item = (&'a Vec<f64>, f64)>,
) -> (DMatrix<f64>, f64) {
    let d = y.len();
    let mut c = DMatrix::<f64>::zeros(d, d);
    let mut total = 0.0;
    let yv = DVector::from_column_slice(y);
    for (x, w) in samples {
        if w <= 0.0 {
            continue;
        }
        let diff = DVector::from_column_slice(x) - &yv;
        c += (&diff * diff.transpose()) * w;
        total += w;
    }
    if total > 0.0 {
        c /= total;
    }
    (c, total)
}

/// Critical estimate for every prototype of `model`, with each sample
/// weighted by its Gibbs membership at the model's temperature.
pub fn critical_temperature_diagnostic(
    model: &OdaModel,
    samples: &[Vec<f64>],
) -> Result<Vec<CriticalEstimate>> {
    let div = &model.divergence;
    let memberships = samples
        .iter()
        .map(|x| model.gibbs_memberships(x))
        .collect::<Result<Vec<_>>>()?;
    let needed = div.dimension + 1;
    model
        .prototypes
        .iter()
        .enumerate()
        .map(|(i, proto)| {
            let have = memberships.iter().filter(|p| p[i] > 0.0).count();
            if have < needed {
                return Err(OdaError::InsufficientSamples {
                    prototype: i,
                    needed,
                    have,
                });
            }
            let (c, _) = weighted_covariance(
                &proto.mu,
                samples.iter().zip(memberships.iter().map(|p| p[i])),
            );
            let eigenvalue = leading_eigenvalue(div.hessian_phi(&proto.mu)?, &c)?;
            Ok(CriticalEstimate { eigenvalue })
        })
        .collect()
}

/// Split temperature of a single cell around `y` holding all of `data`
/// with equal weight.
pub fn critical_temperature_of(div: &Divergence, y: &[f64], data: &[Vec<f64>]) -> Result<f64> {
    for x in data {
        div.validate(x)?;
    }
    let (c, _) = weighted_covariance(y, data.iter().map(|x| (x, 1.0)));
    leading_eigenvalue(div.hessian_phi(y)?, &c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Prototype, Schedule};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn single(div: Divergence, mu: Vec<f64>) -> OdaModel {
        let schedule = Schedule {
            t_init: 1.0,
            ..Schedule::default()
        };
        OdaModel::from_prototypes(div, schedule, vec![Prototype::new(mu, None, 1.0)], 0).unwrap()
    }

    #[test]
    fn isotropic_unit_variance() {
        // Exactly isotropic unit-variance sample: the four points (+-1, +-1)
        // around the origin have covariance I.
        let data = vec![
            vec![1.0, 1.0],
            vec![1.0, -1.0],
            vec![-1.0, 1.0],
            vec![-1.0, -1.0],
        ];
        let model = single(Divergence::squared_euclidean(2), vec![0.0, 0.0]);
        let est = critical_temperature_diagnostic(&model, &data).unwrap();
        assert_eq!(est.len(), 1);
        assert!((est[0].determinant_root() - 0.5).abs() < 1e-12);
        assert!((est[0].split_temperature() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_spread_never_splits() {
        let data = vec![vec![3.0, 3.0]; 5];
        let model = single(Divergence::squared_euclidean(2), vec![3.0, 3.0]);
        let est = critical_temperature_diagnostic(&model, &data).unwrap();
        assert_eq!(est[0].determinant_root(), f64::INFINITY);
        assert_eq!(est[0].split_temperature(), 0.0);
    }

    #[test]
    fn one_dimensional_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let normal = Normal::new(0.0, 1.5).unwrap();
        let data: Vec<Vec<f64>> = (0..500).map(|_| vec![normal.sample(&mut rng)]).collect();
        let mean = data.iter().map(|x| x[0]).sum::<f64>() / 500.0;
        let v = data.iter().map(|x| (x[0] - mean).powi(2)).sum::<f64>() / 500.0;
        let model = single(Divergence::squared_euclidean(1), vec![mean]);
        let est = critical_temperature_diagnostic(&model, &data).unwrap();
        assert!((est[0].determinant_root() - 1.0 / (2.0 * v)).abs() < 1e-9);
        assert!((est[0].split_temperature() - 2.0 * v).abs() < 1e-9);
    }

    #[test]
    fn too_few_samples() {
        let model = single(Divergence::squared_euclidean(2), vec![0.0, 0.0]);
        let err = critical_temperature_diagnostic(&model, &[vec![1.0, 0.0]]).unwrap_err();
        assert!(matches!(err, OdaError::InsufficientSamples { needed: 3, have: 1, .. }));
    }

    #[test]
    fn i_divergence_uses_hessian() {
        // H = diag(1/y); 1-D cell at y = 2 with variance 1 gives H C = 0.5.
        let data = vec![vec![1.0], vec![3.0]];
        let model = single(Divergence::i_divergence(1), vec![2.0]);
        let est = critical_temperature_diagnostic(&model, &data).unwrap();
        assert!((est[0].split_temperature() - 0.5).abs() < 1e-12);
    }
}
