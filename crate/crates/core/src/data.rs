//! Datasets, CSV ingestion, stratified splits and synthetic blobs.
//!
//! The on-disk format is a plain CSV with header `f0,...,f{d-1},label`,
//! decimal feature values, integer labels and `\n` line endings. Feature
//! values are written with the shortest representation that parses back to
//! the same `f64`, so a save/load cycle is bit-exact.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};

/// Feature matrix, labels and a train/test partition.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Vec<usize>,
    class_count: usize,
    train_indices: Vec<usize>,
    test_indices: Vec<usize>,
}

impl Dataset {
    /// Builds a dataset with every sample in the train partition.
    ///
    /// `class_count` defaults to `1 + max(label)`.
    pub fn new(features: Array2<f64>, labels: Vec<usize>, class_count: Option<usize>) -> Result<Self> {
        let n = features.nrows();
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        if labels.len() != n {
            return Err(Error::invalid(format!(
                "{} feature rows but {} labels",
                n,
                labels.len()
            )));
        }
        if let Some((row, _)) = features
            .outer_iter()
            .enumerate()
            .find(|(_, r)| r.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::MalformedRow {
                row: row + 1,
                message: "non-finite feature value".into(),
            });
        }
        let observed = labels.iter().copied().max().unwrap_or(0) + 1;
        let class_count = class_count.unwrap_or(observed).max(2);
        if observed > class_count {
            return Err(Error::invalid(format!(
                "label {} out of range for class_count {}",
                observed - 1,
                class_count
            )));
        }
        Ok(Self {
            features,
            labels,
            class_count,
            train_indices: (0..n).collect(),
            test_indices: Vec::new(),
        })
    }

    /// Overrides the inferred class count, e.g. to admit classes that never
    /// occur in the file.
    pub fn with_class_count(mut self, class_count: usize) -> Result<Self> {
        let observed = self.labels.iter().copied().max().unwrap_or(0) + 1;
        if class_count < observed.max(2) {
            return Err(Error::invalid(format!(
                "class_count {class_count} below observed {observed} classes"
            )));
        }
        self.class_count = class_count;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn sample(&self, index: usize) -> ArrayView1<'_, f64> {
        self.features.row(index)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn train_indices(&self) -> &[usize] {
        &self.train_indices
    }

    pub fn test_indices(&self) -> &[usize] {
        &self.test_indices
    }

    /// Feature rows for `indices`, in order.
    pub fn select_features(&self, indices: &[usize]) -> Array2<f64> {
        self.features.select(Axis(0), indices)
    }

    pub fn select_labels(&self, indices: &[usize]) -> Vec<usize> {
        indices.iter().map(|&i| self.labels[i]).collect()
    }

    /// Per-class sample counts over `indices`.
    pub fn class_histogram(&self, indices: &[usize]) -> Vec<usize> {
        let mut counts = vec![0; self.class_count];
        for &i in indices {
            counts[self.labels[i]] += 1;
        }
        counts
    }

    /// Stratified train/test partition of the current train indices.
    ///
    /// Each class contributes `round(n_c * test_fraction)` samples to the
    /// test set, but always keeps at least one sample in train. Classes with
    /// a single sample stay entirely in train.
    pub fn split(&self, test_fraction: f64, seed: u64) -> Result<Self> {
        if !(test_fraction > 0.0 && test_fraction < 1.0) {
            return Err(Error::invalid(format!(
                "test_fraction must lie in (0, 1), got {test_fraction}"
            )));
        }
        if self.train_indices.len() < 2 {
            return Err(Error::invalid("split needs at least two samples"));
        }
        let mut by_class = vec![Vec::new(); self.class_count];
        for &i in &self.train_indices {
            by_class[self.labels[i]].push(i);
        }
        let mut train = Vec::new();
        let mut test = self.test_indices.clone();
        for (class, mut members) in by_class.into_iter().enumerate() {
            if members.is_empty() {
                continue;
            }
            if members.len() == 1 {
                log::warn!("class {class} has a single sample; keeping it in train");
                train.extend(members);
                continue;
            }
            let mut rng = rng_from_seed(derive_seed(seed, &[class as u64]));
            members.shuffle(&mut rng);
            let n_test = ((members.len() as f64 * test_fraction).round() as usize).min(members.len() - 1);
            test.extend_from_slice(&members[..n_test]);
            train.extend_from_slice(&members[n_test..]);
        }
        train.sort_unstable();
        test.sort_unstable();
        Ok(Self {
            train_indices: train,
            test_indices: test,
            ..self.clone()
        })
    }

    /// Replaces the partition with explicit index sets.
    pub fn with_partition(&self, mut train: Vec<usize>, mut test: Vec<usize>) -> Result<Self> {
        train.sort_unstable();
        test.sort_unstable();
        let n = self.len();
        if train.iter().chain(&test).any(|&i| i >= n) {
            return Err(Error::invalid("partition index out of range"));
        }
        let distinct: BTreeSet<usize> = train.iter().chain(&test).copied().collect();
        if distinct.len() != train.len() + test.len() {
            return Err(Error::invalid("partition indices must be distinct"));
        }
        Ok(Self {
            train_indices: train,
            test_indices: test,
            ..self.clone()
        })
    }

    /// Z-scores every feature using train-partition statistics. Constant
    /// features are only centered.
    pub fn standardized(&self) -> Self {
        let train = self.select_features(&self.train_indices);
        let mean = train.mean_axis(Axis(0)).expect("non-empty train set");
        let std = train.std_axis(Axis(0), 0.0);
        let mut features = &self.features - &mean;
        for (mut col, &s) in features.axis_iter_mut(Axis(1)).zip(std.iter()) {
            if s > 0.0 {
                col /= s;
            }
        }
        Self {
            features,
            ..self.clone()
        }
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file)
    }

    /// Parses the CSV format from any reader. Row numbers in errors count
    /// data rows from 1, excluding the header.
    pub fn read_csv(reader: impl std::io::Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(reader);
        let header = rdr.headers().map_err(|e| Error::InvalidHeader(e.to_string()))?.clone();
        let width = header.len();
        if width < 2 || &header[width - 1] != "label" {
            return Err(Error::InvalidHeader("expected columns f0,...,f{d-1},label".into()));
        }
        for (i, name) in header.iter().take(width - 1).enumerate() {
            if name != format!("f{i}") {
                return Err(Error::InvalidHeader(format!(
                    "column {} is `{name}`, expected `f{i}`",
                    i + 1
                )));
            }
        }
        let dim = width - 1;
        let mut values = Vec::new();
        let mut labels = Vec::new();
        for (i, record) in rdr.records().enumerate() {
            let row = i + 1;
            let record = record.map_err(|e| Error::MalformedRow {
                row,
                message: e.to_string(),
            })?;
            if record.len() != width {
                return Err(Error::MalformedRow {
                    row,
                    message: format!("expected {width} fields, found {}", record.len()),
                });
            }
            for cell in record.iter().take(dim) {
                let v: f64 = cell.parse().map_err(|_| Error::MalformedRow {
                    row,
                    message: format!("non-numeric feature `{cell}`"),
                })?;
                if !v.is_finite() {
                    return Err(Error::MalformedRow {
                        row,
                        message: format!("non-finite feature `{cell}`"),
                    });
                }
                values.push(v);
            }
            let cell = &record[dim];
            let label: usize = cell.parse().map_err(|_| Error::MalformedRow {
                row,
                message: format!("label `{cell}` is not a nonnegative integer"),
            })?;
            labels.push(label);
        }
        if labels.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let features = Array2::from_shape_vec((labels.len(), dim), values).expect("row widths checked above");
        Self::new(features, labels, None)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        self.write_csv(&mut out).map_err(|e| Error::io(path, e))?;
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        let header: Vec<String> = (0..self.dim()).map(|i| format!("f{i}")).collect();
        writeln!(out, "{},label", header.join(","))?;
        for (row, &label) in self.features.outer_iter().zip(&self.labels) {
            for v in row {
                write!(out, "{v},")?;
            }
            writeln!(out, "{label}")?;
        }
        Ok(())
    }
}

/// Labeled/unlabeled bookkeeping over the train partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolState {
    labeled: Vec<usize>,
    unlabeled: BTreeSet<usize>,
}

impl PoolState {
    pub fn new(train_indices: &[usize], initial: &[usize]) -> Result<Self> {
        let mut unlabeled: BTreeSet<usize> = train_indices.iter().copied().collect();
        for &i in initial {
            if !unlabeled.remove(&i) {
                return Err(Error::invalid(format!(
                    "initial index {i} is not an unlabeled train index"
                )));
            }
        }
        Ok(Self {
            labeled: initial.to_vec(),
            unlabeled,
        })
    }

    /// Labeled indices in the order they were labeled.
    pub fn labeled(&self) -> &[usize] {
        &self.labeled
    }

    /// Unlabeled indices in ascending order.
    pub fn unlabeled(&self) -> Vec<usize> {
        self.unlabeled.iter().copied().collect()
    }

    pub fn unlabeled_len(&self) -> usize {
        self.unlabeled.len()
    }

    /// Moves `batch` from the unlabeled pool into the labeled set.
    pub fn reveal(&mut self, batch: &[usize]) -> Result<()> {
        for &i in batch {
            if !self.unlabeled.contains(&i) {
                return Err(Error::invalid(format!("index {i} is not in the unlabeled pool")));
            }
        }
        for &i in batch {
            self.unlabeled.remove(&i);
            self.labeled.push(i);
        }
        Ok(())
    }
}

/// Parameters of the Gaussian blob generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobConfig {
    pub class_count: usize,
    pub dim: usize,
    pub per_class: usize,
    pub outlier_fraction: f64,
    pub separation: f64,
    pub seed: u64,
}

impl Default for BlobConfig {
    fn default() -> Self {
        Self {
            class_count: 2,
            dim: 16,
            per_class: 1000,
            outlier_fraction: 0.0,
            separation: 4.0,
            seed: 0,
        }
    }
}

/// Generated data plus the indices whose labels were corrupted.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub dataset: Dataset,
    pub outliers: Vec<usize>,
}

/// Cluster centers with pairwise distance at least `separation`.
fn blob_centers(class_count: usize, dim: usize, separation: f64) -> Array2<f64> {
    let mut centers = Array2::zeros((class_count, dim));
    if class_count <= dim {
        // Scaled basis vectors: every pair is exactly `separation` apart.
        let scale = separation / std::f64::consts::SQRT_2;
        for c in 0..class_count {
            centers[[c, c]] = scale;
        }
    } else {
        for c in 0..class_count {
            centers[[c, 0]] = separation * c as f64;
        }
    }
    centers
}

/// Isotropic unit-variance Gaussian clusters with simulated label noise.
///
/// Rows are ordered class by class. `round(outlier_fraction * N)` samples,
/// drawn uniformly, get their label replaced by a different class chosen
/// uniformly; their indices are returned sorted.
pub fn generate_blobs(cfg: &BlobConfig) -> Result<SyntheticData> {
    if cfg.class_count < 2 {
        return Err(Error::invalid("generate_blobs needs at least two classes"));
    }
    if cfg.per_class < 10 {
        return Err(Error::invalid("generate_blobs needs at least 10 samples per class"));
    }
    if cfg.dim == 0 {
        return Err(Error::invalid("dimension must be positive"));
    }
    if !(0.0..1.0).contains(&cfg.outlier_fraction) {
        return Err(Error::invalid(format!(
            "outlier_fraction must lie in [0, 1), got {}",
            cfg.outlier_fraction
        )));
    }
    if !(cfg.separation > 0.0 && cfg.separation.is_finite()) {
        return Err(Error::invalid("separation must be positive"));
    }
    let n = cfg.class_count * cfg.per_class;
    let centers = blob_centers(cfg.class_count, cfg.dim, cfg.separation);
    let mut rng = rng_from_seed(derive_seed(cfg.seed, &[0]));
    let mut features = Array2::zeros((n, cfg.dim));
    let mut labels = Vec::with_capacity(n);
    for (i, mut row) in features.outer_iter_mut().enumerate() {
        let class = i / cfg.per_class;
        for (v, &c) in row.iter_mut().zip(centers.row(class)) {
            let z: f64 = rng.sample(StandardNormal);
            *v = c + z;
        }
        labels.push(class);
    }

    let n_outliers = (cfg.outlier_fraction * n as f64).round() as usize;
    let mut noise_rng = rng_from_seed(derive_seed(cfg.seed, &[1]));
    let mut outliers = index::sample(&mut noise_rng, n, n_outliers).into_vec();
    outliers.sort_unstable();
    for &i in &outliers {
        let shift = noise_rng.random_range(1..cfg.class_count);
        labels[i] = (labels[i] + shift) % cfg.class_count;
    }

    let dataset = Dataset::new(features, labels, Some(cfg.class_count))?;
    Ok(SyntheticData { dataset, outliers })
}
