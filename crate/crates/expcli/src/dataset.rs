//! Dataset ingestion, splitting, standardization and synthetic generators.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use kdlab_core::numkit::{gaussian_matrix, Matrix, RngStream};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse { row: usize, column: usize, message: String },
    #[error("non-numeric cell {value:?} at row {row}, column {column}")]
    NonNumericCell { row: usize, column: usize, value: String },
    #[error("dataset has no data rows")]
    EmptyDataset,
    #[error("invalid shape: {0}")]
    InvalidShape(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Regression,
    Classification,
    SequencePrompts,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Real(Vec<f64>),
    Classes(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub targets: Targets,
    pub split: Split,
    pub kind: DatasetKind,
    /// Training-set feature means and standard deviations used for
    /// standardization; `None` for synthetic data, which is generated
    /// already standardized.
    pub standardization: Option<(Vec<f64>, Vec<f64>)>,
}

/// Standard deviations below this are treated as constant columns.
const STD_FLOOR: f64 = 1e-12;

impl Dataset {
    pub fn x_train(&self) -> Matrix {
        self.x.select_rows(&self.split.train)
    }

    pub fn x_test(&self) -> Matrix {
        self.x.select_rows(&self.split.test)
    }

    pub fn y_train(&self) -> Vec<f64> {
        self.real_at(&self.split.train)
    }

    pub fn y_test(&self) -> Vec<f64> {
        self.real_at(&self.split.test)
    }

    pub fn labels_train(&self) -> Vec<usize> {
        self.labels_at(&self.split.train)
    }

    pub fn labels_test(&self) -> Vec<usize> {
        self.labels_at(&self.split.test)
    }

    pub fn classes(&self) -> usize {
        match &self.targets {
            Targets::Classes(c) => c.iter().max().map_or(0, |m| m + 1),
            Targets::Real(_) => 0,
        }
    }

    fn real_at(&self, idx: &[usize]) -> Vec<f64> {
        match &self.targets {
            Targets::Real(y) => idx.iter().map(|&i| y[i]).collect(),
            Targets::Classes(c) => idx.iter().map(|&i| c[i] as f64).collect(),
        }
    }

    fn labels_at(&self, idx: &[usize]) -> Vec<usize> {
        match &self.targets {
            Targets::Classes(c) => idx.iter().map(|&i| c[i]).collect(),
            Targets::Real(y) => idx.iter().map(|&i| y[i] as usize).collect(),
        }
    }
}

/// Reads a headed numeric CSV whose last column is the target, splits it
/// (stratified for classification) and standardizes features with
/// training statistics. Rows and columns in errors are 1-based, counting
/// the header as row 1.
pub fn load_dataset_csv(path: &Path, kind: DatasetKind, split_ratio: f64, seed: u64) -> Result<Dataset, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_dataset_csv(&text, kind, split_ratio, seed)
}

pub fn parse_dataset_csv(text: &str, kind: DatasetKind, split_ratio: f64, seed: u64) -> Result<Dataset, DatasetError> {
    if kind == DatasetKind::SequencePrompts {
        return Err(DatasetError::InvalidShape("sequence prompts are generated, not loaded from CSV".into()));
    }
    if !(split_ratio > 0.0 && split_ratio < 1.0) {
        return Err(DatasetError::InvalidShape(format!("split ratio {split_ratio} must lie in (0, 1)")));
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let width = reader
        .headers()
        .map_err(|e| DatasetError::Parse {
            row: 1,
            column: 1,
            message: e.to_string(),
        })?
        .len();
    if width < 2 {
        return Err(DatasetError::InvalidShape("need at least one feature and a target column".into()));
    }
    let mut features = Vec::new();
    let mut raw_targets = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let row = r + 2;
        let record = record.map_err(|e| DatasetError::Parse {
            row,
            column: 1,
            message: e.to_string(),
        })?;
        if record.len() != width {
            return Err(DatasetError::Parse {
                row,
                column: record.len().min(width) + 1,
                message: format!("expected {width} cells, found {}", record.len()),
            });
        }
        for (c, cell) in record.iter().enumerate() {
            let value: f64 = cell.trim().parse().map_err(|_| DatasetError::NonNumericCell {
                row,
                column: c + 1,
                value: cell.to_string(),
            })?;
            if !value.is_finite() {
                return Err(DatasetError::NonNumericCell {
                    row,
                    column: c + 1,
                    value: cell.to_string(),
                });
            }
            if c + 1 < width {
                features.push(value);
            } else {
                raw_targets.push((row, value));
            }
        }
    }
    let n = raw_targets.len();
    if n == 0 {
        return Err(DatasetError::EmptyDataset);
    }
    let d = width - 1;
    let targets = match kind {
        DatasetKind::Regression => Targets::Real(raw_targets.iter().map(|&(_, v)| v).collect()),
        _ => Targets::Classes(
            raw_targets
                .iter()
                .map(|&(row, v)| {
                    if v >= 0.0 && v.fract() == 0.0 {
                        Ok(v as usize)
                    } else {
                        Err(DatasetError::Parse {
                            row,
                            column: width,
                            message: format!("class label {v} is not a non-negative integer"),
                        })
                    }
                })
                .collect::<Result<_, _>>()?,
        ),
    };
    let x = Matrix::new(n, d, features).map_err(|e| DatasetError::InvalidShape(e.to_string()))?;
    let split = match &targets {
        Targets::Classes(labels) => stratified_split(labels, split_ratio, seed),
        Targets::Real(_) => shuffled_split(n, split_ratio, seed),
    };
    if split.train.is_empty() {
        return Err(DatasetError::InvalidShape("training split is empty".into()));
    }
    let (x, means, stds) = standardize(&x, &split.train);
    Ok(Dataset {
        x,
        targets,
        split,
        kind,
        standardization: Some((means, stds)),
    })
}

/// Standardizes every row with the mean and standard deviation of the rows
/// in `train`. Columns with (near-)zero spread become all-zero.
pub fn standardize(x: &Matrix, train: &[usize]) -> (Matrix, Vec<f64>, Vec<f64>) {
    let d = x.cols();
    let m = train.len() as f64;
    let mut means = vec![0.0; d];
    for &i in train {
        for (mu, v) in means.iter_mut().zip(x.row(i)) {
            *mu += v / m;
        }
    }
    let mut stds = vec![0.0; d];
    for &i in train {
        for ((s, v), mu) in stds.iter_mut().zip(x.row(i)).zip(&means) {
            *s += (v - mu) * (v - mu) / m;
        }
    }
    for s in &mut stds {
        *s = s.sqrt();
    }
    let out = x.clone();
    let mut out = out;
    for i in 0..x.rows() {
        for ((v, mu), s) in out.row_mut(i).iter_mut().zip(&means).zip(&stds) {
            *v = if *s < STD_FLOOR { 0.0 } else { (*v - mu) / s };
        }
    }
    (out, means, stds)
}

fn shuffled_split(n: usize, ratio: f64, seed: u64) -> Split {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut RngStream::new(seed, 0));
    let n_train = (ratio * n as f64).round() as usize;
    let test = idx.split_off(n_train.min(n));
    let mut train = idx;
    train.sort_unstable();
    let mut test = test;
    test.sort_unstable();
    Split { train, test }
}

/// Per-class shuffled split; each class contributes `round(ratio * n_c)`
/// training rows.
fn stratified_split(labels: &[usize], ratio: f64, seed: u64) -> Split {
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &c) in labels.iter().enumerate() {
        by_class.entry(c).or_default().push(i);
    }
    let mut rng = RngStream::new(seed, 0);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (_, mut idx) in by_class {
        idx.shuffle(&mut rng);
        let n_train = (ratio * idx.len() as f64).round() as usize;
        test.extend_from_slice(&idx[n_train..]);
        idx.truncate(n_train);
        train.extend(idx);
    }
    train.sort_unstable();
    test.sort_unstable();
    Split { train, test }
}

/// `n` rows with an 80/20 shuffled split; `x ~ N(0, I)`,
/// `y = xᵀθ* + η`, `η ~ N(0, σ_η²)`.
pub fn synth_regression(n: usize, d: usize, theta_star: &[f64], sigma_eta: f64, seed: u64) -> Result<Dataset, DatasetError> {
    let n_train = (0.8 * n as f64).round() as usize;
    let mut ds = synth_regression_split(n_train, n - n_train, d, theta_star, sigma_eta, seed)?;
    ds.split = shuffled_split(n, 0.8, seed);
    Ok(ds)
}

/// Synthetic regression with the first `n_train` rows as training split.
pub fn synth_regression_split(
    n_train: usize,
    n_test: usize,
    d: usize,
    theta_star: &[f64],
    sigma_eta: f64,
    seed: u64,
) -> Result<Dataset, DatasetError> {
    if d == 0 || n_train <= d {
        return Err(DatasetError::InvalidShape(format!("need more training rows than features ({n_train} <= {d})")));
    }
    if theta_star.len() != d {
        return Err(DatasetError::InvalidShape(format!("theta_star has {} entries, expected {d}", theta_star.len())));
    }
    if sigma_eta.is_nan() || sigma_eta < 0.0 {
        return Err(DatasetError::InvalidShape(format!("noise level {sigma_eta} is negative")));
    }
    let n = n_train + n_test;
    let mut rng = RngStream::new(seed, 1);
    let x = gaussian_matrix(&mut rng, n, d, 0.0, 1.0).expect("unit std is valid");
    let mut y = x.matvec(theta_star).expect("shapes checked");
    if sigma_eta > 0.0 {
        let mut noise_rng = RngStream::new(seed, 2);
        for v in &mut y {
            *v += sigma_eta * noise_rng.standard_normal();
        }
    }
    Ok(Dataset {
        x,
        targets: Targets::Real(y),
        split: Split {
            train: (0..n_train).collect(),
            test: (n_train..n).collect(),
        },
        kind: DatasetKind::Regression,
        standardization: None,
    })
}

/// Isotropic Gaussian blobs with unit covariance. Row `i` has class
/// `i % classes`. With `d >= classes` the class means sit at
/// `(separation/√2) e_c`, pairwise `separation` apart; otherwise they lie on
/// the first axis at spacing `separation`. Split 80/20, stratified.
pub fn synth_classification(
    n: usize,
    d: usize,
    classes: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset, DatasetError> {
    if classes < 2 {
        return Err(DatasetError::InvalidShape("need at least two classes".into()));
    }
    if d == 0 || n < 2 * classes {
        return Err(DatasetError::InvalidShape(format!("{n} rows and {d} features are too few")));
    }
    let mut rng = RngStream::new(seed, 1);
    let mut x = gaussian_matrix(&mut rng, n, d, 0.0, 1.0).expect("unit std is valid");
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let center = (classes - 1) as f64 / 2.0;
    for (i, &c) in labels.iter().enumerate() {
        let row = x.row_mut(i);
        if d >= classes {
            row[c] += separation / std::f64::consts::SQRT_2;
        } else {
            row[0] += separation * (c as f64 - center);
        }
    }
    let split = stratified_split(&labels, 0.8, seed);
    Ok(Dataset {
        x,
        targets: Targets::Classes(labels),
        split,
        kind: DatasetKind::Classification,
        standardization: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_rows_split_eight_two() {
        let mut text = String::from("a,b,y\n");
        for i in 0..10 {
            text.push_str(&format!("{i},{},{}\n", i * 2, i % 3));
        }
        let ds = parse_dataset_csv(&text, DatasetKind::Regression, 0.8, 1).unwrap();
        assert_eq!((ds.split.train.len(), ds.split.test.len()), (8, 2));
    }

    #[test]
    fn constant_column_becomes_zero() {
        let text = "a,b,y\n1,5,0\n2,5,1\n3,5,0\n4,5,1\n5,5,0\n";
        let ds = parse_dataset_csv(text, DatasetKind::Regression, 0.8, 3).unwrap();
        assert!(ds.x.column(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn errors_name_the_cell() {
        let err = parse_dataset_csv("a,y\n1,2\nx,3\n", DatasetKind::Regression, 0.5, 0).unwrap_err();
        assert!(matches!(err, DatasetError::NonNumericCell { row: 3, column: 1, .. }), "{err}");
        let err = parse_dataset_csv("a,y\n", DatasetKind::Regression, 0.5, 0).unwrap_err();
        assert!(matches!(err, DatasetError::EmptyDataset));
        let err = parse_dataset_csv("a,y\n1,2\n1\n", DatasetKind::Regression, 0.5, 0).unwrap_err();
        assert!(matches!(err, DatasetError::Parse { row: 3, .. }), "{err}");
        let err = parse_dataset_csv("a,y\n1,0.5\n2,1\n", DatasetKind::Classification, 0.5, 0).unwrap_err();
        assert!(matches!(err, DatasetError::Parse { row: 2, column: 2, .. }), "{err}");
    }
}
