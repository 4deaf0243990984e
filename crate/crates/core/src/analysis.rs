//! Post-hoc analyses over experiment results: accuracy summaries, Jaccard
//! similarity of queried sets, and class-distribution shift.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use ndarray::Array2;
use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::simulator::{ExperimentResult, Method};

/// Label of the passive model's misclassified train samples in Jaccard
/// tables.
pub const WRONG_LABEL: &str = "wrong";

/// Union of the queried indices of one (dataset, method, clip) cell over
/// all repetitions and iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct QueriedUnion {
    pub dataset: String,
    pub method: Method,
    pub clip_fraction: f64,
    pub indices: BTreeSet<usize>,
}

impl QueriedUnion {
    /// For the passive baseline the union is its misclassified train set.
    pub fn from_result(result: &ExperimentResult) -> Self {
        let indices = result
            .repetitions
            .iter()
            .flat_map(|rep| {
                rep.queried()
                    .chain(rep.passive.iter().flat_map(|p| p.wrong_indices.iter().copied()))
                    .collect::<Vec<_>>()
            })
            .collect();
        Self {
            dataset: result.dataset.clone(),
            method: result.method,
            clip_fraction: result.clip_fraction,
            indices,
        }
    }

    /// Row label in Jaccard tables.
    pub fn label(&self) -> &'static str {
        if self.method == Method::Passive {
            WRONG_LABEL
        } else {
            self.method.id()
        }
    }
}

/// `|A ∩ B| / |A ∪ B|`, with `J(∅, ∅) = 1`.
pub fn jaccard(a: &BTreeSet<usize>, b: &BTreeSet<usize>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

pub fn jaccard_matrix(sets: &[&BTreeSet<usize>]) -> Array2<f64> {
    let n = sets.len();
    let mut m = Array2::ones((n, n));
    for i in 0..n {
        for j in i + 1..n {
            let v = jaccard(sets[i], sets[j]);
            m[[i, j]] = v;
            m[[j, i]] = v;
        }
    }
    m
}

/// `clipped - base`, elementwise.
pub fn jaccard_delta(base: &Array2<f64>, clipped: &Array2<f64>) -> Result<Array2<f64>> {
    if base.dim() != clipped.dim() {
        return Err(Error::invalid(format!(
            "jaccard matrices differ in shape: {:?} vs {:?}",
            base.dim(),
            clipped.dim()
        )));
    }
    Ok(clipped - base)
}

/// Per-class queried fraction minus train fraction.
pub fn class_shift(union: &BTreeSet<usize>, ds: &Dataset) -> Result<Vec<f64>> {
    if union.is_empty() {
        return Err(Error::invalid("class shift of an empty union"));
    }
    let queried: Vec<usize> = union.iter().copied().collect();
    let train = ds.train_indices();
    if train.is_empty() {
        return Err(Error::invalid("class shift needs a train partition"));
    }
    let q = ds.class_histogram(&queried);
    let t = ds.class_histogram(train);
    Ok(q.iter()
        .zip(&t)
        .map(|(&qc, &tc)| qc as f64 / queried.len() as f64 - tc as f64 / train.len() as f64)
        .collect())
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation; zero for fewer than two values.
pub fn sample_sd(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    /// [`GRAND_MEAN_LABEL`] for rows averaged over datasets.
    pub dataset: String,
    pub method: Method,
    pub clip_fraction: f64,
    pub repetitions: usize,
    pub acc_last5_mean: f64,
    pub acc_last5_sd: f64,
    /// Per-iteration means; zero for the passive baseline.
    pub query_seconds_mean: f64,
    pub train_seconds_mean: f64,
}

pub const GRAND_MEAN_LABEL: &str = "all";

type CellKey = (String, Method, u64);

fn cell_key(r: &ExperimentResult) -> CellKey {
    (r.dataset.clone(), r.method, r.clip_fraction.to_bits())
}

/// Results keyed and ordered by (dataset, method, clip); duplicates are
/// rejected so the output does not depend on input order.
fn index_results(results: &[ExperimentResult]) -> Result<BTreeMap<CellKey, &ExperimentResult>> {
    let mut map = BTreeMap::new();
    for r in results {
        if map.insert(cell_key(r), r).is_some() {
            return Err(Error::invalid(format!(
                "duplicate result for {} / {} / clip {}",
                r.dataset, r.method, r.clip_fraction
            )));
        }
    }
    Ok(map)
}

/// Per-cell rows followed by one grand-mean row per (method, clip) that
/// averages the per-dataset means with equal weight.
pub fn summarize(results: &[ExperimentResult]) -> Result<Vec<SummaryRow>> {
    if results.is_empty() {
        return Err(Error::invalid("nothing to summarize"));
    }
    let mut rows = Vec::new();
    for r in index_results(results)?.values() {
        let acc = r.acc_last5()?;
        let iterations: Vec<_> = r.repetitions.iter().flat_map(|rep| &rep.iterations).collect();
        let per_iteration = |f: fn(&crate::simulator::IterationRecord) -> f64| {
            if iterations.is_empty() {
                0.0
            } else {
                iterations.iter().map(|it| f(it)).sum::<f64>() / iterations.len() as f64
            }
        };
        rows.push(SummaryRow {
            dataset: r.dataset.clone(),
            method: r.method,
            clip_fraction: r.clip_fraction,
            repetitions: acc.len(),
            acc_last5_mean: mean(&acc),
            acc_last5_sd: sample_sd(&acc),
            query_seconds_mean: per_iteration(|it| it.query_seconds),
            train_seconds_mean: per_iteration(|it| it.train_seconds),
        });
    }

    let mut groups: BTreeMap<(Method, u64), Vec<&SummaryRow>> = BTreeMap::new();
    for row in &rows {
        groups
            .entry((row.method, row.clip_fraction.to_bits()))
            .or_default()
            .push(row);
    }
    let grand: Vec<SummaryRow> = groups
        .into_values()
        .map(|group| {
            let col = |f: fn(&SummaryRow) -> f64| mean(&group.iter().map(|r| f(r)).collect::<Vec<_>>());
            SummaryRow {
                dataset: GRAND_MEAN_LABEL.to_string(),
                method: group[0].method,
                clip_fraction: group[0].clip_fraction,
                repetitions: group.iter().map(|r| r.repetitions).sum(),
                acc_last5_mean: col(|r| r.acc_last5_mean),
                acc_last5_sd: sample_sd(&group.iter().map(|r| r.acc_last5_mean).collect::<Vec<_>>()),
                query_seconds_mean: col(|r| r.query_seconds_mean),
                train_seconds_mean: col(|r| r.train_seconds_mean),
            }
        })
        .collect();
    rows.extend(grand);
    Ok(rows)
}

/// One Jaccard matrix per (dataset, clip setting).
#[derive(Debug, Clone, PartialEq)]
pub struct JaccardTable {
    pub dataset: String,
    pub clip_fraction: f64,
    pub labels: Vec<String>,
    pub matrix: Array2<f64>,
}

/// Builds the Jaccard tables. The passive baseline's misclassified set
/// joins every clip setting of its dataset under [`WRONG_LABEL`].
pub fn jaccard_tables(results: &[ExperimentResult]) -> Result<Vec<JaccardTable>> {
    let indexed = index_results(results)?;
    let mut by_cell: BTreeMap<(String, u64), Vec<QueriedUnion>> = BTreeMap::new();
    let mut wrong: BTreeMap<String, QueriedUnion> = BTreeMap::new();
    for r in indexed.values() {
        let union = QueriedUnion::from_result(r);
        if r.method == Method::Passive {
            wrong.insert(r.dataset.clone(), union);
        } else {
            by_cell
                .entry((r.dataset.clone(), r.clip_fraction.to_bits()))
                .or_default()
                .push(union);
        }
    }
    Ok(by_cell
        .into_iter()
        .map(|((dataset, clip_bits), mut unions)| {
            if let Some(w) = wrong.get(&dataset) {
                unions.push(w.clone());
            }
            let sets: Vec<&BTreeSet<usize>> = unions.iter().map(|u| &u.indices).collect();
            JaccardTable {
                labels: unions.iter().map(|u| u.label().to_string()).collect(),
                matrix: jaccard_matrix(&sets),
                dataset,
                clip_fraction: f64::from_bits(clip_bits),
            }
        })
        .collect())
}

/// Delta of every clipped table against the unclipped table of the same
/// dataset, restricted to labels present in both.
pub fn jaccard_delta_tables(tables: &[JaccardTable]) -> Result<Vec<(JaccardTable, JaccardTable)>> {
    let mut out = Vec::new();
    for base in tables.iter().filter(|t| t.clip_fraction == 0.0) {
        for clipped in tables
            .iter()
            .filter(|t| t.dataset == base.dataset && t.clip_fraction != 0.0)
        {
            let shared: Vec<&String> = base.labels.iter().filter(|l| clipped.labels.contains(l)).collect();
            let restrict = |t: &JaccardTable| {
                let pos: Vec<usize> = shared
                    .iter()
                    .map(|l| t.labels.iter().position(|x| x == *l).expect("shared label"))
                    .collect();
                JaccardTable {
                    dataset: t.dataset.clone(),
                    clip_fraction: t.clip_fraction,
                    labels: shared.iter().map(|l| l.to_string()).collect(),
                    matrix: Array2::from_shape_fn((pos.len(), pos.len()), |(i, j)| t.matrix[[pos[i], pos[j]]]),
                }
            };
            let b = restrict(base);
            let c = restrict(clipped);
            let delta = jaccard_delta(&b.matrix, &c.matrix)?;
            out.push((b, JaccardTable { matrix: delta, ..c }));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassShiftRow {
    pub dataset: String,
    pub method: Method,
    pub clip_fraction: f64,
    pub class: usize,
    pub queried_fraction: f64,
    pub train_fraction: f64,
    pub shift: f64,
}

/// Class shift of every active-learning cell whose dataset is available.
pub fn class_shift_rows(
    results: &[ExperimentResult],
    datasets: &BTreeMap<String, Dataset>,
) -> Result<Vec<ClassShiftRow>> {
    let mut rows = Vec::new();
    for r in index_results(results)?.values() {
        if r.method == Method::Passive {
            continue;
        }
        let ds = datasets
            .get(&r.dataset)
            .ok_or_else(|| Error::invalid(format!("dataset `{}` not available for class shift", r.dataset)))?;
        let union = QueriedUnion::from_result(r);
        let shift = class_shift(&union.indices, ds)?;
        let train_hist = ds.class_histogram(ds.train_indices());
        for (class, &s) in shift.iter().enumerate() {
            let train_fraction = train_hist[class] as f64 / ds.train_indices().len() as f64;
            rows.push(ClassShiftRow {
                dataset: r.dataset.clone(),
                method: r.method,
                clip_fraction: r.clip_fraction,
                class,
                queried_fraction: s + train_fraction,
                train_fraction,
                shift: s,
            });
        }
    }
    Ok(rows)
}

fn csv_error(e: csv::Error) -> Error {
    Error::Record(e.to_string())
}

pub fn write_summary<W: Write>(out: W, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "dataset",
        "method",
        "clip_fraction",
        "repetitions",
        "acc_last5_mean",
        "acc_last5_sd",
        "query_seconds_mean",
        "train_seconds_mean",
    ])
    .map_err(csv_error)?;
    for r in rows {
        w.write_record([
            r.dataset.clone(),
            r.method.id().to_string(),
            r.clip_fraction.to_string(),
            r.repetitions.to_string(),
            r.acc_last5_mean.to_string(),
            r.acc_last5_sd.to_string(),
            r.query_seconds_mean.to_string(),
            r.train_seconds_mean.to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::Record(e.to_string()))
}

/// Long format: one row per ordered label pair.
pub fn write_jaccard<W: Write>(out: W, tables: &[JaccardTable]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["dataset", "clip_fraction", "method_a", "method_b", "jaccard"])
        .map_err(csv_error)?;
    for t in tables {
        for (i, a) in t.labels.iter().enumerate() {
            for (j, b) in t.labels.iter().enumerate() {
                w.write_record([
                    t.dataset.as_str(),
                    &t.clip_fraction.to_string(),
                    a,
                    b,
                    &t.matrix[[i, j]].to_string(),
                ])
                .map_err(csv_error)?;
            }
        }
    }
    w.flush().map_err(|e| Error::Record(e.to_string()))
}

pub fn write_jaccard_delta<W: Write>(out: W, pairs: &[(JaccardTable, JaccardTable)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "dataset",
        "clip_fraction",
        "method_a",
        "method_b",
        "base",
        "clipped",
        "delta",
    ])
    .map_err(csv_error)?;
    for (base, delta) in pairs {
        for (i, a) in delta.labels.iter().enumerate() {
            for (j, b) in delta.labels.iter().enumerate() {
                let d = delta.matrix[[i, j]];
                let b0 = base.matrix[[i, j]];
                w.write_record([
                    delta.dataset.as_str(),
                    &delta.clip_fraction.to_string(),
                    a,
                    b,
                    &b0.to_string(),
                    &(b0 + d).to_string(),
                    &d.to_string(),
                ])
                .map_err(csv_error)?;
            }
        }
    }
    w.flush().map_err(|e| Error::Record(e.to_string()))
}

pub fn write_class_shift<W: Write>(out: W, rows: &[ClassShiftRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "dataset",
        "method",
        "clip_fraction",
        "class",
        "queried_fraction",
        "train_fraction",
        "shift",
    ])
    .map_err(csv_error)?;
    for r in rows {
        w.write_record([
            r.dataset.clone(),
            r.method.id().to_string(),
            r.clip_fraction.to_string(),
            r.class.to_string(),
            r.queried_fraction.to_string(),
            r.train_fraction.to_string(),
            r.shift.to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::Record(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{IterationRecord, PassiveResult, RepetitionResult};
    use ndarray::array;

    fn set(v: &[usize]) -> BTreeSet<usize> {
        v.iter().copied().collect()
    }

    fn result(dataset: &str, method: Method, clip: f64, accs: &[f64]) -> ExperimentResult {
        let repetitions = accs
            .iter()
            .enumerate()
            .map(|(r, &a)| RepetitionResult {
                repetition: r,
                initial_indices: vec![0],
                iterations: (1..=5)
                    .map(|t| IterationRecord {
                        iteration: t,
                        accuracy: a,
                        query_seconds: 0.002,
                        train_seconds: 0.5,
                        queried_indices: vec![t + 10 * r],
                    })
                    .collect(),
                passive: None,
            })
            .collect();
        ExperimentResult {
            dataset: dataset.into(),
            method,
            clip_fraction: clip,
            repetitions,
        }
    }

    #[test]
    fn jaccard_examples() {
        let a = set(&[1, 2, 3]);
        assert_eq!(jaccard(&a, &a), 1.0);
        assert_eq!(jaccard(&a, &set(&[7, 8])), 0.0);
        assert_eq!(jaccard(&a, &set(&[2, 3, 4])), 0.5);
        assert_eq!(jaccard(&set(&[]), &set(&[])), 1.0);
        let m = jaccard_matrix(&[&a, &set(&[2, 3, 4]), &set(&[])]);
        assert_eq!(m, array![[1.0, 0.5, 0.0], [0.5, 1.0, 0.0], [0.0, 0.0, 1.0]]);
    }

    #[test]
    fn delta_examples() {
        let base = array![[1.0, 0.30], [0.30, 1.0]];
        let clipped = array![[1.0, 0.25], [0.25, 1.0]];
        let d = jaccard_delta(&base, &clipped).unwrap();
        assert!((d[[0, 1]] + 0.05).abs() < 1e-15);
        assert_eq!(jaccard_delta(&base, &base).unwrap(), Array2::<f64>::zeros((2, 2)));
        assert_eq!(jaccard_delta(&clipped, &base).unwrap(), -d);
        assert!(jaccard_delta(&base, &Array2::zeros((3, 3))).is_err());
    }

    #[test]
    fn class_shift_examples() {
        let ds = Dataset::new(Array2::zeros((4, 1)), vec![0, 0, 1, 1], None).unwrap();
        assert_eq!(class_shift(&set(&[0, 1, 2, 3]), &ds).unwrap(), vec![0.0, 0.0]);
        assert_eq!(class_shift(&set(&[0, 1]), &ds).unwrap(), vec![0.5, -0.5]);
        assert!(class_shift(&set(&[]), &ds).is_err());
    }

    #[test]
    fn summary_statistics() {
        let rows = summarize(&[result("d", Method::Random, 0.0, &[0.7])]).unwrap();
        assert_eq!(rows[0].acc_last5_mean, 0.7);
        assert_eq!(rows[0].acc_last5_sd, 0.0);
        assert_eq!(rows[0].query_seconds_mean, 0.002);

        let rows = summarize(&[result("d", Method::Random, 0.0, &[0.8, 0.9])]).unwrap();
        assert!((rows[0].acc_last5_mean - 0.85).abs() < 1e-15);
    }

    #[test]
    fn grand_mean_weights_datasets_equally() {
        let results = [
            result("a", Method::Random, 0.0, &[0.6, 0.8]),
            result("b", Method::Random, 0.0, &[0.9, 0.9]),
        ];
        let rows = summarize(&results).unwrap();
        let grand = rows.iter().find(|r| r.dataset == GRAND_MEAN_LABEL).unwrap();
        assert!((grand.acc_last5_mean - (0.7 + 0.9) / 2.0).abs() < 1e-15);
        let reversed = [results[1].clone(), results[0].clone()];
        assert_eq!(summarize(&reversed).unwrap(), rows);
    }

    #[test]
    fn delta_tables_pair_clip_settings() {
        let mut passive = result("d", Method::Passive, 0.0, &[]);
        passive.repetitions = vec![RepetitionResult {
            repetition: 0,
            initial_indices: vec![],
            iterations: vec![],
            passive: Some(PassiveResult {
                accuracy: 0.9,
                wrong_indices: vec![1, 2],
            }),
        }];
        let results = [
            result("d", Method::Random, 0.0, &[0.5]),
            result("d", Method::Random, 0.05, &[0.5]),
            result("d", Method::SoftmaxLeastConfidence, 0.0, &[0.5]),
            passive,
        ];
        let tables = jaccard_tables(&results).unwrap();
        assert_eq!(tables.len(), 2);
        assert_eq!(tables[0].labels, vec!["softmax-lc", "rand", "wrong"]);
        let deltas = jaccard_delta_tables(&tables).unwrap();
        assert_eq!(deltas.len(), 1);
        assert_eq!(deltas[0].1.labels, vec!["rand", "wrong"]);
        assert_eq!(deltas[0].1.matrix, Array2::<f64>::zeros((2, 2)));
    }

    #[test]
    fn tables_are_deterministic() {
        let results = [result("d", Method::Random, 0.0, &[0.5, 0.75])];
        let write = || {
            let mut buf = Vec::new();
            write_summary(&mut buf, &summarize(&results).unwrap()).unwrap();
            buf
        };
        let text = String::from_utf8(write()).unwrap();
        assert_eq!(write(), text.as_bytes());
        assert!(text.starts_with("dataset,method,clip_fraction,"));
    }
}
