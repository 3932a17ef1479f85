//! Clustering and classification surfaces over a trained model.

use std::collections::BTreeSet;

use crate::error::{OdaError, Result};
use crate::model::{Observation, OdaModel};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabeledDataset {
    pub rows: Vec<Observation>,
    pub classes: BTreeSet<String>,
    pub dimension: usize,
}

impl LabeledDataset {
    pub fn new(rows: Vec<Observation>) -> Result<Self> {
        let dimension = rows.first().map_or(0, |r| r.x.len());
        if let Some(bad) = rows.iter().find(|r| r.x.len() != dimension) {
            return Err(OdaError::DimensionMismatch {
                expected: dimension,
                got: bad.x.len(),
            });
        }
        let labeled = rows.first().is_some_and(|r| r.c.is_some());
        if rows.iter().any(|r| r.c.is_some() != labeled) {
            return Err(OdaError::InvalidArgument(
                "rows must be all labeled or all unlabeled".into(),
            ));
        }
        let classes = rows.iter().filter_map(|r| r.c.clone()).collect();
        Ok(Self {
            rows,
            classes,
            dimension,
        })
    }

    pub fn from_points(points: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(points.into_iter().map(Observation::unlabeled).collect())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn is_labeled(&self) -> bool {
        !self.classes.is_empty()
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.x.clone()).collect()
    }
}

fn argmin_first(values: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::INFINITY;
    for (i, v) in values.enumerate() {
        if v < best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

/// Index of the nearest prototype; ties go to the lowest index.
pub fn quantize(model: &OdaModel, x: &[f64]) -> Result<usize> {
    model.divergence.validate(x)?;
    Ok(argmin_first(
        model
            .prototypes
            .iter()
            .map(|p| model.divergence.distance_unchecked(x, &p.mu)),
    ))
}

/// Label of the prototype with the largest mass-weighted Gibbs membership.
pub fn predict_class(model: &OdaModel, x: &[f64]) -> Result<String> {
    if let Some(i) = model.prototypes.iter().position(|p| p.label.is_none()) {
        return Err(OdaError::UntrainedModel(format!("prototype {i} has no label")));
    }
    let p = model.gibbs_memberships(x)?;
    let best = argmin_first(p.iter().map(|v| -v));
    Ok(model.prototypes[best].label.clone().expect("checked above"))
}

/// Mean over rows of the divergence to the nearest prototype.
pub fn average_distortion(model: &OdaModel, data: &LabeledDataset) -> Result<f64> {
    if data.is_empty() {
        return Err(OdaError::InvalidArgument("empty dataset".into()));
    }
    let mut total = 0.0;
    for row in &data.rows {
        model.divergence.validate(&row.x)?;
        total += model
            .prototypes
            .iter()
            .map(|p| model.divergence.distance_unchecked(&row.x, &p.mu))
            .fold(f64::INFINITY, f64::min);
    }
    Ok(total / data.len() as f64)
}

/// Fraction of rows whose predicted class equals the row label.
pub fn accuracy(model: &OdaModel, data: &LabeledDataset) -> Result<f64> {
    if data.is_empty() {
        return Err(OdaError::InvalidArgument("empty dataset".into()));
    }
    let mut hits = 0usize;
    for row in &data.rows {
        let label = row
            .c
            .as_deref()
            .ok_or_else(|| OdaError::InvalidArgument("unlabeled row".into()))?;
        if predict_class(model, &row.x)? == label {
            hits += 1;
        }
    }
    Ok(hits as f64 / data.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergence::Divergence;
    use crate::model::{Prototype, Schedule};

    fn model(protos: Vec<Prototype>, t: f64) -> OdaModel {
        let d = protos[0].mu.len();
        let schedule = Schedule {
            t_init: t,
            ..Schedule::default()
        };
        OdaModel::from_prototypes(Divergence::squared_euclidean(d), schedule, protos, 1).unwrap()
    }

    fn labeled(mu: Vec<f64>, c: &str, rho: f64) -> Prototype {
        Prototype::new(mu, Some(c.to_string()), rho)
    }

    #[test]
    fn quantize_nearest_and_ties() {
        let m = model(
            vec![
                Prototype::new(vec![0.0, 0.0], None, 0.5),
                Prototype::new(vec![10.0, 10.0], None, 0.5),
            ],
            1.0,
        );
        assert_eq!(quantize(&m, &[1.0, 1.0]).unwrap(), 0);
        assert_eq!(quantize(&m, &[5.0, 5.0]).unwrap(), 0);
        assert_eq!(quantize(&m, &[9.0, 9.5]).unwrap(), 1);
        let single = model(vec![Prototype::new(vec![3.0], None, 1.0)], 1.0);
        for x in [-100.0, 0.0, 3.0, 55.0] {
            assert_eq!(quantize(&single, &[x]).unwrap(), 0);
        }
    }

    #[test]
    fn predict_class_cases() {
        let m = model(
            vec![labeled(vec![0.0], "A", 0.5), labeled(vec![4.0], "B", 0.5)],
            1.0,
        );
        assert_eq!(predict_class(&m, &[0.0]).unwrap(), "A");
        // Equidistant point: the heavier prototype wins.
        let m = model(
            vec![labeled(vec![0.0], "A", 0.7), labeled(vec![4.0], "B", 0.3)],
            1.0,
        );
        assert_eq!(predict_class(&m, &[2.0]).unwrap(), "A");
        let m = model(vec![labeled(vec![1.0, 1.0], "only", 1.0)], 1.0);
        assert_eq!(predict_class(&m, &[-7.0, 3.0]).unwrap(), "only");
    }

    #[test]
    fn predict_class_needs_labels() {
        let m = model(vec![Prototype::new(vec![0.0], None, 1.0)], 1.0);
        assert!(matches!(predict_class(&m, &[0.0]), Err(OdaError::UntrainedModel(_))));
    }

    #[test]
    fn distortion_cases() {
        let m = model(
            vec![
                Prototype::new(vec![0.0], None, 0.5),
                Prototype::new(vec![5.0], None, 0.5),
            ],
            1.0,
        );
        let at_protos = LabeledDataset::from_points(vec![vec![0.0], vec![5.0]]).unwrap();
        assert_eq!(average_distortion(&m, &at_protos).unwrap(), 0.0);

        let m = model(vec![Prototype::new(vec![1.0], None, 1.0)], 1.0);
        let data = LabeledDataset::from_points(vec![vec![0.0], vec![2.0]]).unwrap();
        assert_eq!(average_distortion(&m, &data).unwrap(), 1.0);

        let pts = vec![vec![0.0, 1.0], vec![2.0, -1.0], vec![3.0, 3.0]];
        let m = model(vec![Prototype::new(vec![1.0, 1.0], None, 1.0)], 1.0);
        let brute: f64 = pts
            .iter()
            .map(|p: &Vec<f64>| (p[0] - 1.0).powi(2) + (p[1] - 1.0).powi(2))
            .sum::<f64>()
            / 3.0;
        let data = LabeledDataset::from_points(pts).unwrap();
        assert!((average_distortion(&m, &data).unwrap() - brute).abs() < 1e-12);
    }

    #[test]
    fn accuracy_cases() {
        let m = model(
            vec![labeled(vec![-3.0], "A", 0.5), labeled(vec![3.0], "B", 0.5)],
            0.1,
        );
        let data = LabeledDataset::new(vec![
            Observation::labeled(vec![-3.2], "A"),
            Observation::labeled(vec![-2.5], "A"),
            Observation::labeled(vec![2.9], "B"),
            Observation::labeled(vec![3.4], "B"),
        ])
        .unwrap();
        assert_eq!(accuracy(&m, &data).unwrap(), 1.0);

        let other = LabeledDataset::new(vec![
            Observation::labeled(vec![-3.0], "Z"),
            Observation::labeled(vec![3.0], "Z"),
        ])
        .unwrap();
        let one = model(vec![labeled(vec![0.0], "A", 1.0)], 0.1);
        assert_eq!(accuracy(&one, &other).unwrap(), 0.0);
    }

    #[test]
    fn accuracy_against_shuffled_labels() {
        use rand::seq::SliceRandom;
        use rand::{Rng, SeedableRng};
        let m = model(
            vec![labeled(vec![-1.0], "A", 0.5), labeled(vec![1.0], "B", 0.5)],
            0.05,
        );
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let xs: Vec<f64> = (0..1000).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut labels: Vec<&str> = (0..1000).map(|i| if i % 2 == 0 { "A" } else { "B" }).collect();
        labels.shuffle(&mut rng);
        let data = LabeledDataset::new(
            xs.into_iter()
                .zip(labels)
                .map(|(x, c)| Observation::labeled(vec![x], c))
                .collect(),
        )
        .unwrap();
        let acc = accuracy(&m, &data).unwrap();
        assert!((acc - 0.5).abs() <= 0.05, "acc = {acc}");
    }

    #[test]
    fn ragged_dataset_rejected() {
        let err = LabeledDataset::from_points(vec![vec![1.0], vec![1.0, 2.0]]).unwrap_err();
        assert!(matches!(err, OdaError::DimensionMismatch { .. }));
    }
}
