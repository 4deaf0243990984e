//! Orchestration behind the `alconf` binary: synthetic data generation,
//! experiment grids, and analysis of result directories.

pub mod config;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use alconf_core::analysis;
use alconf_core::simulator::{read_records, run_repetition, write_records, RepetitionResult};
use alconf_core::{generate_blobs, BlobConfig, Dataset, ExperimentResult};
use anyhow::{bail, Context};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use config::{Cell, RunConfig};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const JACCARD_FILE: &str = "jaccard.csv";
pub const JACCARD_DELTA_FILE: &str = "jaccard_delta.csv";
pub const CLASS_SHIFT_FILE: &str = "class_shift.csv";

/// Sidecar listing the ground-truth outlier rows of a generated dataset,
/// one index per line: `blobs.csv` becomes `blobs.outliers.txt`.
pub fn outlier_sidecar(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("outliers.txt")
}

pub fn gen_data(cfg: &BlobConfig, out: &Path) -> anyhow::Result<PathBuf> {
    let data = generate_blobs(cfg)?;
    data.dataset.save_csv(out)?;
    let sidecar = outlier_sidecar(out);
    let mut w = BufWriter::new(File::create(&sidecar).with_context(|| format!("cannot write {}", sidecar.display()))?);
    for i in &data.outliers {
        writeln!(w, "{i}")?;
    }
    w.flush()?;
    Ok(sidecar)
}

pub fn read_outliers(path: &Path) -> anyhow::Result<Vec<usize>> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.trim().parse().with_context(|| format!("bad outlier index `{l}`")))
        .collect()
}

/// Everything needed to reproduce a run, written before any cell starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_path: PathBuf,
    pub base_seed: u64,
    pub output_dir: PathBuf,
    pub config: RunConfig,
    pub cells: Vec<Cell>,
}

impl RunManifest {
    pub fn load(dir: &Path) -> anyhow::Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Loads a dataset and applies the configured split and scaling.
pub fn prepare_dataset(cfg: &RunConfig, path: &Path) -> anyhow::Result<Dataset> {
    let ds = Dataset::load_csv(path)?.split(cfg.data.test_fraction, cfg.split_seed())?;
    Ok(if cfg.data.standardize { ds.standardized() } else { ds })
}

#[derive(Debug)]
pub struct CellFailure {
    pub cell: Cell,
    pub message: String,
}

#[derive(Debug)]
pub struct RunReport {
    pub manifest: RunManifest,
    pub written: Vec<PathBuf>,
    pub failures: Vec<CellFailure>,
}

/// Runs every grid cell on a pool of `jobs` threads. Repetitions of all
/// cells are scheduled as independent jobs; each owns its clock and seeds,
/// so the result files do not depend on `jobs`.
pub fn run(config_path: &Path, out_dir: &Path, jobs: usize) -> anyhow::Result<RunReport> {
    let cfg = RunConfig::load(config_path)?;
    let mut datasets = BTreeMap::new();
    for entry in &cfg.datasets {
        if !entry.path.is_file() {
            bail!("dataset `{}` not found at {}", entry.name, entry.path.display());
        }
        let ds = prepare_dataset(&cfg, &entry.path).with_context(|| format!("cannot load dataset `{}`", entry.name))?;
        datasets.insert(entry.name.clone(), ds);
    }

    fs::create_dir_all(out_dir).with_context(|| format!("cannot create {}", out_dir.display()))?;
    let manifest = RunManifest {
        config_path: config_path.to_path_buf(),
        base_seed: cfg.base_seed,
        output_dir: out_dir.to_path_buf(),
        cells: cfg.cells(),
        config: cfg,
    };
    fs::write(out_dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;

    let cfg = &manifest.config;
    let tasks: Vec<(usize, usize)> = (0..manifest.cells.len())
        .flat_map(|c| (0..cfg.protocol.repetitions).map(move |r| (c, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build()?;
    let outcomes: Vec<alconf_core::Result<RepetitionResult>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(c, r)| {
                let cell = &manifest.cells[c];
                log::info!("running {cell}, repetition {r}");
                let clock = cfg.clock.make();
                run_repetition(
                    &cfg.experiment_config(cell),
                    &datasets[&cell.dataset],
                    r,
                    clock.as_ref(),
                )
            })
            .collect()
    });

    let mut outcomes = outcomes.into_iter();
    let mut written = Vec::new();
    let mut failures = Vec::new();
    for cell in &manifest.cells {
        let reps: alconf_core::Result<Vec<_>> = outcomes.by_ref().take(cfg.protocol.repetitions).collect();
        let outcome = reps.map_err(anyhow::Error::from).and_then(|repetitions| {
            let result = ExperimentResult {
                dataset: cell.dataset.clone(),
                method: cell.method,
                clip_fraction: cell.clip_fraction,
                repetitions,
            };
            let path = out_dir.join(&cell.file);
            let file = File::create(&path).with_context(|| format!("cannot write {}", path.display()))?;
            write_records(BufWriter::new(file), &result.to_records()?)?;
            Ok(path)
        });
        match outcome {
            Ok(path) => written.push(path),
            Err(e) => {
                log::error!("{cell} failed: {e:#}");
                failures.push(CellFailure {
                    cell: cell.clone(),
                    message: format!("{e:#}"),
                });
            }
        }
    }
    Ok(RunReport {
        manifest,
        written,
        failures,
    })
}

/// Reads every `*.jsonl` result file of `dir`, in file name order.
pub fn load_results(dir: &Path) -> anyhow::Result<Vec<ExperimentResult>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("cannot read {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let records = read_records(BufReader::new(File::open(p)?))?;
            ExperimentResult::from_records(&records).with_context(|| format!("in {}", p.display()))
        })
        .collect()
}

/// Writes the four analysis tables for the results in `results_dir`. Class
/// shift needs the datasets, which are located through the run manifest.
pub fn analyze(results_dir: &Path, out_dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let results = load_results(results_dir)?;
    if results.is_empty() {
        bail!("no result files in {}", results_dir.display());
    }
    let mut datasets = BTreeMap::new();
    match RunManifest::load(results_dir) {
        Ok(manifest) => {
            for entry in &manifest.config.datasets {
                datasets.insert(entry.name.clone(), prepare_dataset(&manifest.config, &entry.path)?);
            }
        }
        Err(e) => log::warn!("no usable manifest, class shift table left empty: {e:#}"),
    }
    let shift_inputs: Vec<ExperimentResult> = results
        .iter()
        .filter(|r| datasets.contains_key(&r.dataset))
        .cloned()
        .collect();

    fs::create_dir_all(out_dir)?;
    let create = |name: &str| -> anyhow::Result<BufWriter<File>> {
        let path = out_dir.join(name);
        Ok(BufWriter::new(
            File::create(&path).with_context(|| format!("cannot write {}", path.display()))?,
        ))
    };
    analysis::write_summary(create(SUMMARY_FILE)?, &analysis::summarize(&results)?)?;
    let tables = analysis::jaccard_tables(&results)?;
    analysis::write_jaccard(create(JACCARD_FILE)?, &tables)?;
    analysis::write_jaccard_delta(create(JACCARD_DELTA_FILE)?, &analysis::jaccard_delta_tables(&tables)?)?;
    analysis::write_class_shift(
        create(CLASS_SHIFT_FILE)?,
        &analysis::class_shift_rows(&shift_inputs, &datasets)?,
    )?;
    Ok([SUMMARY_FILE, JACCARD_FILE, JACCARD_DELTA_FILE, CLASS_SHIFT_FILE]
        .iter()
        .map(|f| out_dir.join(f))
        .collect())
}
