//! Dataset ingestion, synthetic generators and preprocessing.

use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use oda_core::model::Observation;
use oda_core::tasks::LabeledDataset;
use rand::distr::weighted::WeightedIndex;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::Serialize;
use thiserror::Error;

use crate::config::{Component, Synthetic};

#[derive(Debug, Error, PartialEq)]
pub enum DataError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("dataset is empty")]
    EmptyFile,
    #[error("ragged rows: line {line} has {got} columns, expected {expected}")]
    RaggedRows {
        line: usize,
        expected: usize,
        got: usize,
    },
    #[error("parse error: cannot read {path}: {message}")]
    Unreadable { path: String, message: String },
    #[error("invalid generator spec: {0}")]
    Spec(String),
}

/// Reads comma-separated rows. A first line whose feature fields are all
/// non-numeric is taken as a header.
pub fn ingest_csv(path: &Path, has_labels: bool) -> Result<LabeledDataset, DataError> {
    let text = std::fs::read_to_string(path).map_err(|e| DataError::Unreadable {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_csv(&text, has_labels)
}

pub fn parse_csv(text: &str, has_labels: bool) -> Result<LabeledDataset, DataError> {
    let mut rows = Vec::new();
    let mut width = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').map(str::trim).collect();
        let n_features = if has_labels {
            if fields.len() < 2 {
                return Err(DataError::Parse {
                    line,
                    message: "labeled rows need at least one feature and a label".into(),
                });
            }
            fields.len() - 1
        } else {
            fields.len()
        };
        let parsed: Vec<Option<f64>> = fields[..n_features]
            .iter()
            .map(|f| f.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect();
        if rows.is_empty() && width.is_none() && parsed.iter().all(Option::is_none) {
            width = Some(fields.len());
            continue;
        }
        match width {
            Some(w) if w != fields.len() => {
                return Err(DataError::RaggedRows {
                    line,
                    expected: w,
                    got: fields.len(),
                })
            }
            None => width = Some(fields.len()),
            _ => {}
        }
        let mut x = Vec::with_capacity(n_features);
        for (f, v) in fields.iter().zip(&parsed) {
            match v {
                Some(v) => x.push(*v),
                None => {
                    return Err(DataError::Parse {
                        line,
                        message: format!("{f:?} is not a finite number"),
                    })
                }
            }
        }
        rows.push(match has_labels {
            true => Observation::labeled(x, fields[n_features]),
            false => Observation::unlabeled(x),
        });
    }
    if rows.is_empty() {
        return Err(DataError::EmptyFile);
    }
    LabeledDataset::new(rows).map_err(|e| DataError::Parse {
        line: 0,
        message: e.to_string(),
    })
}

/// Lower factor `L` with `L L^T = cov`; tolerates singular covariances.
fn factor(cov: &[Vec<f64>], d: usize) -> Result<DMatrix<f64>, DataError> {
    if cov.len() != d || cov.iter().any(|r| r.len() != d) {
        return Err(DataError::Spec(format!("covariance must be {d}x{d}")));
    }
    let m = DMatrix::from_fn(d, d, |i, j| cov[i][j]);
    if (&m - m.transpose()).abs().max() > 1e-12 {
        return Err(DataError::Spec("covariance must be symmetric".into()));
    }
    let eig = SymmetricEigen::new(m);
    if eig.eigenvalues.iter().any(|&l| l < -1e-9) {
        return Err(DataError::Spec("covariance must be positive semidefinite".into()));
    }
    let roots = DVector::from_iterator(d, eig.eigenvalues.iter().map(|l| l.max(0.0).sqrt()));
    Ok(eig.eigenvectors * DMatrix::from_diagonal(&roots))
}

fn component_factor(c: &Component, d: usize) -> Result<DMatrix<f64>, DataError> {
    match (&c.cov, c.std) {
        (Some(cov), _) => factor(cov, d),
        (None, Some(s)) if s >= 0.0 => Ok(DMatrix::identity(d, d) * s),
        (None, Some(_)) => Err(DataError::Spec("std must be non-negative".into())),
        (None, None) => Ok(DMatrix::identity(d, d)),
    }
}

/// Seeded draws from a Gaussian mixture, labeled by component.
pub fn synthesize_mixture<R: Rng + ?Sized>(
    samples: usize,
    components: &[Component],
    rng: &mut R,
) -> Result<LabeledDataset, DataError> {
    let first = components
        .first()
        .ok_or_else(|| DataError::Spec("no components".into()))?;
    let d = first.mean.len();
    if d == 0 || components.iter().any(|c| c.mean.len() != d) {
        return Err(DataError::Spec("component means must share a positive dimension".into()));
    }
    let total: f64 = components.iter().map(|c| c.weight).sum();
    if (total - 1.0).abs() > 1e-9 || components.iter().any(|c| !(c.weight >= 0.0)) {
        return Err(DataError::Spec(format!("weights must be non-negative and sum to 1 (got {total})")));
    }
    let factors = components
        .iter()
        .map(|c| component_factor(c, d))
        .collect::<Result<Vec<_>, _>>()?;
    let pick = WeightedIndex::new(components.iter().map(|c| c.weight))
        .map_err(|e| DataError::Spec(e.to_string()))?;
    let mut rows = Vec::with_capacity(samples);
    for _ in 0..samples {
        let k = pick.sample(rng);
        let z = DVector::from_iterator(d, (0..d).map(|_| StandardNormal.sample(rng)));
        let x = &factors[k] * z + DVector::from_column_slice(&components[k].mean);
        let label = components[k].label.clone().unwrap_or_else(|| k.to_string());
        rows.push(Observation::labeled(x.iter().copied().collect(), label));
    }
    LabeledDataset::new(rows).map_err(|e| DataError::Spec(e.to_string()))
}

/// Noisy concentric rings, uniformly spread over angle; ring `i` is class
/// `"i"`.
pub fn synthesize_circles<R: Rng + ?Sized>(
    samples: usize,
    radii: &[f64],
    noise: f64,
    center: &[f64],
    rng: &mut R,
) -> Result<LabeledDataset, DataError> {
    if radii.is_empty() || center.len() != 2 {
        return Err(DataError::Spec("circles need radii and a 2-D center".into()));
    }
    let jitter = Normal::new(0.0, noise).map_err(|e| DataError::Spec(e.to_string()))?;
    let mut rows = Vec::with_capacity(samples);
    for _ in 0..samples {
        let k = rng.random_range(0..radii.len());
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let r = radii[k] + jitter.sample(rng);
        let x = vec![center[0] + r * angle.cos(), center[1] + r * angle.sin()];
        rows.push(Observation::labeled(x, k.to_string()));
    }
    LabeledDataset::new(rows).map_err(|e| DataError::Spec(e.to_string()))
}

pub fn synthesize<R: Rng + ?Sized>(spec: &Synthetic, rng: &mut R) -> Result<LabeledDataset, DataError> {
    match spec {
        Synthetic::Mixture {
            samples,
            components,
        } => synthesize_mixture(*samples, components, rng),
        Synthetic::Circles {
            samples,
            radii,
            noise,
            center,
        } => synthesize_circles(*samples, radii, *noise, center.as_deref().unwrap_or(&[0.0, 0.0]), rng),
    }
}

/// Per-feature affine map fitted on a training set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Zero mean, unit deviation; constant features keep unit scale.
    pub fn fit(data: &LabeledDataset) -> Self {
        let n = data.len().max(1) as f64;
        let d = data.dimension;
        let mut mean = vec![0.0; d];
        for r in &data.rows {
            for (m, v) in mean.iter_mut().zip(&r.x) {
                *m += v / n;
            }
        }
        let mut std = vec![0.0; d];
        for r in &data.rows {
            for ((s, v), m) in std.iter_mut().zip(&r.x).zip(&mean) {
                *s += (v - m).powi(2) / n;
            }
        }
        let std = std
            .into_iter()
            .map(|v| if v > 0.0 { v.sqrt() } else { 1.0 })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, data: &mut LabeledDataset) {
        for r in &mut data.rows {
            for ((v, m), s) in r.x.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
    }
}

/// Seeded shuffle, then the first `test_fraction` of rows go to the test
/// set. Returns `(train, test)`.
pub fn split<R: Rng + ?Sized>(
    data: &LabeledDataset,
    test_fraction: f64,
    rng: &mut R,
) -> Result<(LabeledDataset, LabeledDataset), DataError> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(DataError::Spec("test_fraction must lie in [0, 1)".into()));
    }
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(rng);
    let n_test = (data.len() as f64 * test_fraction).round() as usize;
    let pick = |ids: &[usize]| {
        LabeledDataset::new(ids.iter().map(|&i| data.rows[i].clone()).collect())
            .map_err(|e| DataError::Spec(e.to_string()))
    };
    let test = pick(&idx[..n_test])?;
    let train = pick(&idx[n_test..])?;
    if train.is_empty() {
        return Err(DataError::EmptyFile);
    }
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn comp(mean: Vec<f64>, std: f64, weight: f64) -> Component {
        Component {
            mean,
            cov: None,
            std: Some(std),
            weight,
            label: None,
        }
    }

    #[test]
    fn csv_examples() {
        let d = parse_csv("1.0,2.0\n3.0,4.0", false).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.dimension, 2);

        let d = parse_csv("x1,x2,y\n1,2,A", true).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.rows[0].c.as_deref(), Some("A"));
        assert_eq!(d.rows[0].x, vec![1.0, 2.0]);

        assert_eq!(
            parse_csv("1.0,oops", false).unwrap_err(),
            DataError::Parse {
                line: 1,
                message: "\"oops\" is not a finite number".into()
            }
        );
    }

    #[test]
    fn csv_errors() {
        assert_eq!(parse_csv("", false).unwrap_err(), DataError::EmptyFile);
        assert_eq!(parse_csv("a,b\n", false).unwrap_err(), DataError::EmptyFile);
        assert!(matches!(
            parse_csv("1,2\n3\n", false).unwrap_err(),
            DataError::RaggedRows { line: 2, expected: 2, got: 1 }
        ));
        assert!(matches!(
            parse_csv("1,2\n3,x\n", false).unwrap_err(),
            DataError::Parse { line: 2, .. }
        ));
        assert!(matches!(
            ingest_csv(Path::new("/nonexistent/data.csv"), false).unwrap_err(),
            DataError::Unreadable { .. }
        ));
    }

    #[test]
    fn mixture_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = synthesize_mixture(50, &[comp(vec![1.0, -2.0], 0.0, 1.0)], &mut rng).unwrap();
        assert!(d.rows.iter().all(|r| r.x == vec![1.0, -2.0]));

        let d = synthesize_mixture(
            200,
            &[comp(vec![0.0], 1.0, 1.0), comp(vec![100.0], 1.0, 0.0)],
            &mut rng,
        )
        .unwrap();
        assert!(d.rows.iter().all(|r| r.c.as_deref() == Some("0")));

        let d = synthesize_mixture(
            10_000,
            &[comp(vec![-3.0, 0.0], 1.0, 0.5), comp(vec![3.0, 0.0], 1.0, 0.5)],
            &mut rng,
        )
        .unwrap();
        for (label, cx) in [("0", -3.0), ("1", 3.0)] {
            let pts: Vec<&Vec<f64>> = d.rows.iter().filter(|r| r.c.as_deref() == Some(label)).map(|r| &r.x).collect();
            let n = pts.len() as f64;
            let mx = pts.iter().map(|p| p[0]).sum::<f64>() / n;
            let my = pts.iter().map(|p| p[1]).sum::<f64>() / n;
            assert!((mx - cx).abs() < 0.1 && my.abs() < 0.1, "{mx} {my}");
        }
    }

    #[test]
    fn mixture_spec_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(synthesize_mixture(5, &[comp(vec![0.0], 1.0, 0.7)], &mut rng).is_err());
        assert!(synthesize_mixture(5, &[], &mut rng).is_err());
        let bad = Component {
            cov: Some(vec![vec![1.0, 2.0], vec![2.0, 1.0]]),
            ..comp(vec![0.0, 0.0], 1.0, 1.0)
        };
        assert!(synthesize_mixture(5, &[bad], &mut rng).is_err());
    }

    #[test]
    fn full_covariance_is_respected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = Component {
            cov: Some(vec![vec![4.0, 1.0], vec![1.0, 1.0]]),
            ..comp(vec![0.0, 0.0], 1.0, 1.0)
        };
        let d = synthesize_mixture(20_000, &[c], &mut rng).unwrap();
        let n = d.len() as f64;
        let cxx = d.rows.iter().map(|r| r.x[0] * r.x[0]).sum::<f64>() / n;
        let cxy = d.rows.iter().map(|r| r.x[0] * r.x[1]).sum::<f64>() / n;
        assert!((cxx - 4.0).abs() < 0.15 && (cxy - 1.0).abs() < 0.1, "{cxx} {cxy}");
    }

    #[test]
    fn circles_have_the_right_radii() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = synthesize_circles(500, &[1.0, 2.0], 0.0, &[5.0, 5.0], &mut rng).unwrap();
        for r in &d.rows {
            let rad = ((r.x[0] - 5.0).powi(2) + (r.x[1] - 5.0).powi(2)).sqrt();
            let want = if r.c.as_deref() == Some("0") { 1.0 } else { 2.0 };
            assert!((rad - want).abs() < 1e-9);
        }
    }

    #[test]
    fn standardize_and_split() {
        let mut d = parse_csv("1,10,A\n3,10,B\n5,10,A\n7,10,B\n9,10,A", true).unwrap();
        let s = Standardizer::fit(&d);
        assert_eq!(s.mean, vec![5.0, 10.0]);
        assert_eq!(s.std[1], 1.0);
        s.apply(&mut d);
        let m: f64 = d.rows.iter().map(|r| r.x[0]).sum::<f64>();
        assert!(m.abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (train, test) = split(&d, 0.2, &mut rng).unwrap();
        assert_eq!((train.len(), test.len()), (4, 1));
        let (a, _) = split(&d, 0.2, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let (b, _) = split(&d, 0.2, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }
}
