//! Experiment grid configuration, read from TOML.
//!
//! ```toml
//! base_seed = 0
//!
//! [[datasets]]
//! name = "blobs"
//! path = "blobs.csv"
//!
//! [grid]
//! methods = ["rand", "lc", "mm"]
//! clip_fractions = [0.0, 0.05]
//! ```
//!
//! Every other section is optional and falls back to the defaults below.
//! Unknown keys anywhere are rejected.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use alconf_core::strategy::DEFAULT_CLIP_FRACTION;
use alconf_core::{Clock, ExperimentConfig, LearnerConfig, Method, MethodParams, StepClock, WallClock};
use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub clock: ClockKind,
    #[serde(default)]
    pub data: DataSettings,
    pub datasets: Vec<DatasetEntry>,
    pub grid: Grid,
    #[serde(default)]
    pub protocol: Protocol,
    #[serde(default)]
    pub learner: LearnerSettings,
    #[serde(default)]
    pub hyperparameters: MethodParams,
}

/// Time source for runtime records. `step` advances a fixed millisecond per
/// reading and yields byte-identical result files.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockKind {
    #[default]
    Wall,
    Step,
}

impl ClockKind {
    pub fn make(self) -> Box<dyn Clock> {
        match self {
            ClockKind::Wall => Box::new(WallClock::new()),
            ClockKind::Step => Box::new(StepClock::new(std::time::Duration::from_millis(1))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSettings {
    pub test_fraction: f64,
    /// Seed of the train/test split; the base seed when absent.
    pub split_seed: Option<u64>,
    pub standardize: bool,
}

impl Default for DataSettings {
    fn default() -> Self {
        Self {
            test_fraction: 0.2,
            split_seed: None,
            standardize: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetEntry {
    pub name: String,
    /// Relative paths are resolved against the config file's directory.
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub methods: Vec<Method>,
    #[serde(default = "default_clips")]
    pub clip_fractions: Vec<f64>,
}

fn default_clips() -> Vec<f64> {
    vec![0.0, DEFAULT_CLIP_FRACTION]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Protocol {
    pub initial_labeled: usize,
    pub iterations: usize,
    pub batch_size: usize,
    pub repetitions: usize,
}

impl Default for Protocol {
    fn default() -> Self {
        Self {
            initial_labeled: 25,
            iterations: 20,
            batch_size: 25,
            repetitions: 10,
        }
    }
}

/// Network and optimiser settings shared by every model. Heads, losses and
/// seeds are chosen per model by the simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearnerSettings {
    pub hidden_sizes: Vec<usize>,
    pub dropout_rate: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for LearnerSettings {
    fn default() -> Self {
        let d = LearnerConfig::default();
        Self {
            hidden_sizes: d.hidden_sizes,
            dropout_rate: d.dropout_rate,
            epochs: d.epochs,
            learning_rate: d.learning_rate,
            batch_size: d.batch_size,
        }
    }
}

impl LearnerSettings {
    pub fn to_learner_config(&self) -> LearnerConfig {
        LearnerConfig {
            hidden_sizes: self.hidden_sizes.clone(),
            dropout_rate: self.dropout_rate,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            ..LearnerConfig::default()
        }
    }
}

/// One (dataset, method, clip) combination of the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub dataset: String,
    pub method: Method,
    pub clip_fraction: f64,
    pub file: String,
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} / {} / clip {}", self.dataset, self.method, self.clip_fraction)
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        let mut cfg = Self::parse(&text).with_context(|| format!("invalid config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for d in &mut cfg.datasets {
            if d.path.is_relative() {
                d.path = base.join(&d.path);
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> anyhow::Result<()> {
        if self.datasets.is_empty() {
            bail!("config lists no datasets");
        }
        if self.grid.methods.is_empty() {
            bail!("grid lists no methods");
        }
        if self.grid.clip_fractions.is_empty() {
            bail!("grid lists no clip fractions");
        }
        let mut names = BTreeSet::new();
        for d in &self.datasets {
            let safe = !d.name.is_empty()
                && d.name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
            if !safe {
                bail!(
                    "dataset name `{}` must be non-empty and use only [A-Za-z0-9._-]",
                    d.name
                );
            }
            if !names.insert(&d.name) {
                bail!("dataset name `{}` appears twice", d.name);
            }
        }
        if BTreeSet::from_iter(&self.grid.methods).len() != self.grid.methods.len() {
            bail!("grid lists a method twice");
        }
        let clips: BTreeSet<u64> = self.grid.clip_fractions.iter().map(|c| c.to_bits()).collect();
        if clips.len() != self.grid.clip_fractions.len() {
            bail!("grid lists a clip fraction twice");
        }
        for &c in &self.grid.clip_fractions {
            if !(0.0..1.0).contains(&c) {
                bail!("clip fraction {c} outside [0, 1)");
            }
        }
        if !(self.data.test_fraction > 0.0 && self.data.test_fraction < 1.0) {
            bail!("test_fraction must lie in (0, 1)");
        }
        self.learner.to_learner_config().validate()?;
        Ok(())
    }

    pub fn split_seed(&self) -> u64 {
        self.data.split_seed.unwrap_or(self.base_seed)
    }

    /// Grid cells in dataset, method, clip order. The passive baseline does
    /// not query, so it gets a single unclipped cell per dataset.
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for d in &self.datasets {
            for &method in &self.grid.methods {
                let clips = if method == Method::Passive {
                    vec![0.0]
                } else {
                    self.grid.clip_fractions.clone()
                };
                for clip_fraction in clips {
                    cells.push(Cell {
                        dataset: d.name.clone(),
                        method,
                        clip_fraction,
                        file: format!("{}__{}__clip{}.jsonl", d.name, method.id(), clip_fraction),
                    });
                }
            }
        }
        cells
    }

    pub fn experiment_config(&self, cell: &Cell) -> ExperimentConfig {
        ExperimentConfig {
            clip_fraction: cell.clip_fraction,
            initial_labeled: self.protocol.initial_labeled,
            iterations: self.protocol.iterations,
            batch_size: self.protocol.batch_size,
            repetitions: self.protocol.repetitions,
            base_seed: self.base_seed,
            learner: self.learner.to_learner_config(),
            params: self.hyperparameters.clone(),
            ..ExperimentConfig::new(cell.dataset.clone(), cell.method)
        }
    }
}
