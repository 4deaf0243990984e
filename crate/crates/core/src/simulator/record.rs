//! Line-delimited JSON result files.
//!
//! One file holds one experiment: per repetition an `initial` record
//! followed by its `iteration` records (or a single `passive` record), then
//! one `summary` record.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{ExperimentResult, IterationRecord, Method, PassiveResult, RepetitionResult};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ResultRecord {
    Initial {
        dataset: String,
        method: Method,
        clip_fraction: f64,
        repetition: usize,
        initial_indices: Vec<usize>,
    },
    Iteration {
        dataset: String,
        method: Method,
        clip_fraction: f64,
        repetition: usize,
        iteration: usize,
        accuracy: f64,
        query_seconds: f64,
        train_seconds: f64,
        queried_indices: Vec<usize>,
    },
    Passive {
        dataset: String,
        method: Method,
        clip_fraction: f64,
        repetition: usize,
        accuracy: f64,
        wrong_indices: Vec<usize>,
    },
    Summary {
        dataset: String,
        method: Method,
        clip_fraction: f64,
        acc_last5: Vec<f64>,
    },
}

impl ExperimentResult {
    pub fn to_records(&self) -> Result<Vec<ResultRecord>> {
        let dataset = &self.dataset;
        let mut out = Vec::new();
        for rep in &self.repetitions {
            if let Some(p) = &rep.passive {
                out.push(ResultRecord::Passive {
                    dataset: dataset.clone(),
                    method: self.method,
                    clip_fraction: self.clip_fraction,
                    repetition: rep.repetition,
                    accuracy: p.accuracy,
                    wrong_indices: p.wrong_indices.clone(),
                });
                continue;
            }
            out.push(ResultRecord::Initial {
                dataset: dataset.clone(),
                method: self.method,
                clip_fraction: self.clip_fraction,
                repetition: rep.repetition,
                initial_indices: rep.initial_indices.clone(),
            });
            out.extend(rep.iterations.iter().map(|it| ResultRecord::Iteration {
                dataset: dataset.clone(),
                method: self.method,
                clip_fraction: self.clip_fraction,
                repetition: rep.repetition,
                iteration: it.iteration,
                accuracy: it.accuracy,
                query_seconds: it.query_seconds,
                train_seconds: it.train_seconds,
                queried_indices: it.queried_indices.clone(),
            }));
        }
        out.push(ResultRecord::Summary {
            dataset: dataset.clone(),
            method: self.method,
            clip_fraction: self.clip_fraction,
            acc_last5: self.acc_last5()?,
        });
        Ok(out)
    }

    /// Rebuilds a result from the records of one file.
    pub fn from_records(records: &[ResultRecord]) -> Result<Self> {
        let header = match records.last() {
            Some(ResultRecord::Summary {
                dataset,
                method,
                clip_fraction,
                ..
            }) => (dataset.clone(), *method, *clip_fraction),
            Some(_) => return Err(Error::Record("result file does not end with a summary".into())),
            None => return Err(Error::Record("empty result file".into())),
        };
        let mut repetitions: Vec<RepetitionResult> = Vec::new();
        for record in &records[..records.len() - 1] {
            match record {
                ResultRecord::Initial {
                    repetition,
                    initial_indices,
                    ..
                } => repetitions.push(RepetitionResult {
                    repetition: *repetition,
                    initial_indices: initial_indices.clone(),
                    iterations: Vec::new(),
                    passive: None,
                }),
                ResultRecord::Iteration {
                    repetition,
                    iteration,
                    accuracy,
                    query_seconds,
                    train_seconds,
                    queried_indices,
                    ..
                } => {
                    let rep = repetitions
                        .last_mut()
                        .filter(|r| r.repetition == *repetition && r.passive.is_none())
                        .ok_or_else(|| {
                            Error::Record(format!(
                                "iteration record of repetition {repetition} without initial record"
                            ))
                        })?;
                    rep.iterations.push(IterationRecord {
                        iteration: *iteration,
                        accuracy: *accuracy,
                        query_seconds: *query_seconds,
                        train_seconds: *train_seconds,
                        queried_indices: queried_indices.clone(),
                    });
                }
                ResultRecord::Passive {
                    repetition,
                    accuracy,
                    wrong_indices,
                    ..
                } => repetitions.push(RepetitionResult {
                    repetition: *repetition,
                    initial_indices: Vec::new(),
                    iterations: Vec::new(),
                    passive: Some(PassiveResult {
                        accuracy: *accuracy,
                        wrong_indices: wrong_indices.clone(),
                    }),
                }),
                ResultRecord::Summary { .. } => {
                    return Err(Error::Record("summary record before the end of the file".into()))
                }
            }
        }
        let (dataset, method, clip_fraction) = header;
        Ok(Self {
            dataset,
            method,
            clip_fraction,
            repetitions,
        })
    }
}

pub fn write_records<W: Write>(mut writer: W, records: &[ResultRecord]) -> Result<()> {
    for record in records {
        let line = serde_json::to_string(record).map_err(|e| Error::Record(e.to_string()))?;
        writeln!(writer, "{line}").map_err(|e| Error::Record(e.to_string()))?;
    }
    writer.flush().map_err(|e| Error::Record(e.to_string()))
}

pub fn read_records<R: BufRead>(reader: R) -> Result<Vec<ResultRecord>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Record(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| Error::Record(format!("line {}: {e}", n + 1)))?;
        out.push(record);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ExperimentResult {
        let iterations = (1..=5)
            .map(|t| IterationRecord {
                iteration: t,
                accuracy: 0.5 + t as f64 / 10.0,
                query_seconds: 0.001,
                train_seconds: 0.25,
                queried_indices: vec![t * 2, t * 2 + 1],
            })
            .collect();
        ExperimentResult {
            dataset: "blobs".into(),
            method: Method::SoftmaxMargin,
            clip_fraction: 0.05,
            repetitions: vec![RepetitionResult {
                repetition: 0,
                initial_indices: vec![0, 1],
                iterations,
                passive: None,
            }],
        }
    }

    #[test]
    fn round_trip() {
        let result = sample();
        let mut buf = Vec::new();
        write_records(&mut buf, &result.to_records().unwrap()).unwrap();
        let back = ExperimentResult::from_records(&read_records(buf.as_slice()).unwrap()).unwrap();
        assert_eq!(back, result);
    }

    #[test]
    fn iteration_line_has_fixed_field_names() {
        let records = sample().to_records().unwrap();
        let line = serde_json::to_value(&records[1]).unwrap();
        for field in [
            "dataset",
            "method",
            "clip_fraction",
            "repetition",
            "iteration",
            "accuracy",
            "query_seconds",
            "queried_indices",
        ] {
            assert!(line.get(field).is_some(), "missing {field}");
        }
        assert_eq!(line["method"], "softmax-mm");
        let summary = serde_json::to_value(records.last().unwrap()).unwrap();
        assert_eq!(summary["kind"], "summary");
        assert!((summary["acc_last5"][0].as_f64().unwrap() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn passive_round_trip() {
        let result = ExperimentResult {
            dataset: "d".into(),
            method: Method::Passive,
            clip_fraction: 0.0,
            repetitions: vec![RepetitionResult {
                repetition: 0,
                initial_indices: vec![],
                iterations: vec![],
                passive: Some(PassiveResult {
                    accuracy: 0.9,
                    wrong_indices: vec![3, 9],
                }),
            }],
        };
        let back = ExperimentResult::from_records(&result.to_records().unwrap()).unwrap();
        assert_eq!(back, result);
    }

    #[test]
    fn rejects_truncated_files() {
        let records = sample().to_records().unwrap();
        assert!(ExperimentResult::from_records(&records[..3]).is_err());
        assert!(ExperimentResult::from_records(&[]).is_err());
        assert!(read_records("{\"kind\":\"nope\"}\n".as_bytes()).is_err());
    }
}
