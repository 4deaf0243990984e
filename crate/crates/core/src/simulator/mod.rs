//! Pool-based active learning simulation.
//!
//! Each iteration trains a vanilla prediction model on the current labels
//! and records its test accuracy, then prepares the method's selection
//! scorer, ranks the unlabeled pool and reveals the labels of the queried
//! batch. Accuracy always comes from the prediction model, so methods are
//! compared on what they select and not on how well their own model
//! classifies.

mod clock;
mod method;
mod record;

use serde::{Deserialize, Serialize};

use crate::confidence::{
    ensemble_kld, ensemble_vote_entropy, evidential_confidence, fit_temperature, head_confidence, inhibited_softmax,
    mc_dropout, softmax, temperature_scaled, trust_score, ConfidenceReport, TrustIndex, DEFAULT_TRUST_K,
};
use crate::data::{Dataset, PoolState};
use crate::error::{Error, Result};
use crate::learner::{train, HeadKind, LearnerConfig, LearnerModel, LossKind};
use crate::rng::{derive_seed, rng_from_seed};
use crate::strategy::{self, QueryRequest, StrategyKind};

pub use clock::{Clock, StepClock, WallClock};
pub use method::Method;
pub use record::{read_records, write_records, ResultRecord};

// Seed path tags.
const TAG_INITIAL: u64 = 1;
const TAG_PREDICTION: u64 = 2;
const TAG_SELECTION: u64 = 3;
const TAG_QUERY: u64 = 4;
const TAG_PASSIVE: u64 = 5;

/// Hyperparameters of the confidence methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MethodParams {
    pub is_alpha: f64,
    pub is_lambda: f64,
    pub trust_k: usize,
    pub trust_density_fraction: f64,
    pub mc_passes: usize,
    pub ensemble_size: usize,
    pub ls_alpha: f64,
    pub evidential_anneal_epochs: usize,
}

impl Default for MethodParams {
    fn default() -> Self {
        Self {
            is_alpha: 1.0,
            is_lambda: 0.01,
            trust_k: DEFAULT_TRUST_K,
            trust_density_fraction: 0.0,
            mc_passes: 50,
            ensemble_size: 5,
            ls_alpha: 0.2,
            evidential_anneal_epochs: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Name written to result records.
    pub dataset: String,
    pub method: Method,
    pub clip_fraction: f64,
    pub initial_labeled: usize,
    pub iterations: usize,
    pub batch_size: usize,
    pub repetitions: usize,
    pub base_seed: u64,
    /// Architecture and optimiser shared by every model; head, loss and seed
    /// are set per model.
    pub learner: LearnerConfig,
    pub params: MethodParams,
}

impl ExperimentConfig {
    pub fn new(dataset: impl Into<String>, method: Method) -> Self {
        Self {
            dataset: dataset.into(),
            method,
            clip_fraction: 0.0,
            initial_labeled: 25,
            iterations: 20,
            batch_size: 25,
            repetitions: 10,
            base_seed: 0,
            learner: LearnerConfig::default(),
            params: MethodParams::default(),
        }
    }

    pub fn validate(&self, ds: &Dataset) -> Result<()> {
        self.learner.validate()?;
        if !(0.0..1.0).contains(&self.clip_fraction) {
            return Err(Error::invalid("clip_fraction must lie in [0, 1)"));
        }
        if ds.test_indices().is_empty() {
            return Err(Error::invalid("dataset has no test partition"));
        }
        if self.method == Method::Passive {
            return Ok(());
        }
        if self.initial_labeled < 2 || self.batch_size == 0 {
            return Err(Error::invalid(
                "need at least two initial labels and a positive batch size",
            ));
        }
        let needed = self.initial_labeled + self.iterations * self.batch_size;
        if needed > ds.train_indices().len() {
            return Err(Error::PoolExhausted {
                available: ds.train_indices().len(),
                requested: needed,
            });
        }
        if self.method.is_committee() && self.params.ensemble_size < 2 {
            return Err(Error::invalid("committee methods need at least two members"));
        }
        if self.method == Method::McDropout && self.params.mc_passes == 0 {
            return Err(Error::invalid("mc_passes must be positive"));
        }
        Ok(())
    }

    /// Seed of repetition `r`.
    pub fn repetition_seed(&self, repetition: usize) -> u64 {
        self.base_seed.wrapping_add(repetition as u64)
    }

    fn prediction_config(&self, seed: u64) -> LearnerConfig {
        LearnerConfig {
            head: HeadKind::Softmax,
            loss: LossKind::CrossEntropy,
            seed,
            ..self.learner.clone()
        }
    }

    /// Learner configuration of the method's own selection model, if it
    /// trains one.
    fn selection_config(&self, seed: u64) -> Option<LearnerConfig> {
        let (head, loss) = match self.method {
            Method::InhibitedSoftmax => (
                HeadKind::InhibitedSoftmax,
                LossKind::Inhibited {
                    alpha: self.params.is_alpha,
                    lambda: self.params.is_lambda,
                },
            ),
            Method::Evidential => (
                HeadKind::Evidential,
                LossKind::Evidential {
                    anneal_epochs: self.params.evidential_anneal_epochs,
                },
            ),
            Method::LabelSmoothing => (
                HeadKind::Softmax,
                LossKind::LabelSmoothing {
                    alpha: self.params.ls_alpha,
                },
            ),
            Method::VoteEntropy | Method::KlDivergence => (HeadKind::Softmax, LossKind::CrossEntropy),
            _ => return None,
        };
        Some(LearnerConfig {
            head,
            loss,
            seed,
            ..self.learner.clone()
        })
    }
}

/// What the selection step scores the pool with.
#[derive(Debug, Clone)]
pub enum SelectionScorer {
    /// No scoring (random sampling).
    Unranked,
    /// Reuse the prediction model.
    Prediction,
    /// Temperature fitted on the labeled set, applied to prediction logits.
    Temperature(f64),
    /// A separately trained model with its own head or loss.
    Model(LearnerModel),
    Committee(Vec<LearnerModel>),
}

/// Trains the prediction model and the method's selection scorer on the
/// current labels.
pub fn two_model_step(
    cfg: &ExperimentConfig,
    ds: &Dataset,
    labeled: &[usize],
    prediction_seed: u64,
    selection_seed: u64,
) -> Result<(LearnerModel, SelectionScorer)> {
    if labeled.is_empty() {
        return Err(Error::invalid("two_model_step needs labeled samples"));
    }
    let prediction = train(&cfg.prediction_config(prediction_seed), ds, labeled)?;
    let scorer = match cfg.method {
        Method::Random | Method::Passive => SelectionScorer::Unranked,
        Method::SoftmaxLeastConfidence
        | Method::SoftmaxEntropy
        | Method::SoftmaxMargin
        | Method::TrustScore
        | Method::McDropout => SelectionScorer::Prediction,
        Method::TemperatureScaling => {
            let logits = prediction.forward_logits(ds.select_features(labeled).view(), None)?;
            SelectionScorer::Temperature(fit_temperature(logits.view(), &ds.select_labels(labeled))?)
        }
        Method::InhibitedSoftmax | Method::Evidential | Method::LabelSmoothing => {
            let sel_cfg = cfg.selection_config(selection_seed).expect("method trains a model");
            SelectionScorer::Model(train(&sel_cfg, ds, labeled)?)
        }
        Method::VoteEntropy | Method::KlDivergence => {
            let members = (0..cfg.params.ensemble_size as u64)
                .map(|e| {
                    let member_cfg = cfg
                        .selection_config(selection_seed.wrapping_add(e))
                        .expect("committee trains models");
                    train(&member_cfg, ds, labeled)
                })
                .collect::<Result<Vec<_>>>()?;
            SelectionScorer::Committee(members)
        }
    };
    Ok((prediction, scorer))
}

/// Scores `pool` for the configured method; `None` for unranked methods.
fn score_pool(
    cfg: &ExperimentConfig,
    ds: &Dataset,
    labeled: &[usize],
    pool: &[usize],
    prediction: &LearnerModel,
    scorer: &SelectionScorer,
    mc_seed: u64,
) -> Result<Option<ConfidenceReport>> {
    let features = ds.select_features(pool);
    let report = match (cfg.method, scorer) {
        (_, SelectionScorer::Unranked) => return Ok(None),
        (Method::McDropout, _) => mc_dropout(prediction, features.view(), cfg.params.mc_passes, mc_seed)?,
        (Method::TrustScore, _) => {
            let base = softmax(prediction.forward_logits(features.view(), None)?.view());
            let index = TrustIndex::build(ds, labeled, cfg.params.trust_k, cfg.params.trust_density_fraction)?;
            trust_score(&index, features.view(), &base)?
        }
        (_, SelectionScorer::Prediction) => softmax(prediction.forward_logits(features.view(), None)?.view()),
        (_, SelectionScorer::Temperature(t)) => {
            temperature_scaled(prediction.forward_logits(features.view(), None)?.view(), *t)?
        }
        (Method::InhibitedSoftmax, SelectionScorer::Model(m)) => {
            inhibited_softmax(m.forward_logits(features.view(), None)?.view(), cfg.params.is_alpha)
        }
        (Method::Evidential, SelectionScorer::Model(m)) => {
            evidential_confidence(m.forward_logits(features.view(), None)?.view())
        }
        (_, SelectionScorer::Model(m)) => head_confidence(m, features.view())?,
        (method, SelectionScorer::Committee(members)) => {
            let distributions = members
                .iter()
                .map(|m| Ok(softmax(m.forward_logits(features.view(), None)?.view()).distributions))
                .collect::<Result<Vec<_>>>()?;
            if method == Method::KlDivergence {
                ensemble_kld(&distributions)?
            } else {
                ensemble_vote_entropy(&distributions)?
            }
        }
    };
    Ok(Some(report))
}

/// Ranks the pool and returns the queried batch.
fn query(cfg: &ExperimentConfig, pool: &[usize], report: Option<&ConfidenceReport>, seed: u64) -> Result<Vec<usize>> {
    let req = QueryRequest {
        pool,
        batch_size: cfg.batch_size,
        reports: report,
        clip_fraction: cfg.clip_fraction,
        seed,
    };
    match cfg.method {
        Method::Random => strategy::random_strategy(&req),
        Method::SoftmaxEntropy => strategy::select(StrategyKind::Entropy, &req),
        Method::SoftmaxMargin => strategy::select(StrategyKind::Margin, &req),
        Method::SoftmaxLeastConfidence => strategy::select(StrategyKind::LeastConfidence, &req),
        Method::Passive => Err(Error::invalid("passive baseline does not query")),
        // Every other method ranks by its own uncertainty, which is
        // 1 - confidence for the probability-calibrating ones.
        _ => strategy::max_uncertainty(&req),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// 1-based.
    pub iteration: usize,
    /// Test accuracy of the prediction model before this iteration's query.
    pub accuracy: f64,
    /// Scoring plus selection time.
    pub query_seconds: f64,
    /// Time spent training the prediction model and the selection scorer.
    pub train_seconds: f64,
    pub queried_indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassiveResult {
    pub accuracy: f64,
    /// Train indices the passive model misclassifies.
    pub wrong_indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepetitionResult {
    pub repetition: usize,
    pub initial_indices: Vec<usize>,
    pub iterations: Vec<IterationRecord>,
    pub passive: Option<PassiveResult>,
}

impl RepetitionResult {
    pub fn accuracies(&self) -> Vec<f64> {
        self.iterations.iter().map(|it| it.accuracy).collect()
    }

    /// Mean accuracy of the final five iterations, or the passive accuracy.
    pub fn acc_last5(&self) -> Result<f64> {
        match &self.passive {
            Some(p) => Ok(p.accuracy),
            None => compute_acc_last5(&self.accuracies()),
        }
    }

    pub fn queried(&self) -> impl Iterator<Item = usize> + '_ {
        self.iterations.iter().flat_map(|it| it.queried_indices.iter().copied())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub dataset: String,
    pub method: Method,
    pub clip_fraction: f64,
    pub repetitions: Vec<RepetitionResult>,
}

impl ExperimentResult {
    pub fn acc_last5(&self) -> Result<Vec<f64>> {
        self.repetitions.iter().map(RepetitionResult::acc_last5).collect()
    }
}

pub fn compute_acc_last5(accuracies: &[f64]) -> Result<f64> {
    if accuracies.len() < 5 {
        return Err(Error::invalid(format!(
            "acc_last5 needs at least five iterations, got {}",
            accuracies.len()
        )));
    }
    Ok(accuracies[accuracies.len() - 5..].iter().sum::<f64>() / 5.0)
}

/// Uniform initial draw, redrawn while it covers a single class.
fn draw_initial(ds: &Dataset, count: usize, seed: u64) -> Vec<usize> {
    let train = ds.train_indices();
    let mut draw = Vec::new();
    for attempt in 0..1000u64 {
        let mut rng = rng_from_seed(derive_seed(seed, &[TAG_INITIAL, attempt]));
        draw = rand::seq::index::sample(&mut rng, train.len(), count)
            .into_iter()
            .map(|i| train[i])
            .collect();
        let covered = ds.class_histogram(&draw).iter().filter(|&&c| c > 0).count();
        if covered >= 2 || ds.class_count() < 2 {
            return draw;
        }
    }
    log::warn!("initial labeled set covers a single class after 1000 draws");
    draw
}

fn seconds(clock: &dyn Clock, start: std::time::Duration) -> f64 {
    clock::to_millis_seconds(clock.now().saturating_sub(start))
}

/// Runs one repetition of the experiment.
pub fn run_repetition(
    cfg: &ExperimentConfig,
    ds: &Dataset,
    repetition: usize,
    clock: &dyn Clock,
) -> Result<RepetitionResult> {
    cfg.validate(ds)?;
    let seed = cfg.repetition_seed(repetition);

    if cfg.method == Method::Passive {
        let train_set = ds.train_indices();
        let model = train(&cfg.prediction_config(derive_seed(seed, &[TAG_PASSIVE])), ds, train_set)?;
        let predictions = model.predict(ds.select_features(train_set).view())?;
        let wrong_indices = train_set
            .iter()
            .zip(predictions)
            .filter(|(&i, p)| ds.labels()[i] != *p)
            .map(|(&i, _)| i)
            .collect();
        return Ok(RepetitionResult {
            repetition,
            initial_indices: Vec::new(),
            iterations: Vec::new(),
            passive: Some(PassiveResult {
                accuracy: model.accuracy(ds, ds.test_indices())?,
                wrong_indices,
            }),
        });
    }

    let initial = draw_initial(ds, cfg.initial_labeled, seed);
    let mut pool = PoolState::new(ds.train_indices(), &initial)?;
    let mut iterations = Vec::with_capacity(cfg.iterations);
    for t in 1..=cfg.iterations as u64 {
        let labeled = pool.labeled().to_vec();
        let train_start = clock.now();
        let (prediction, scorer) = two_model_step(
            cfg,
            ds,
            &labeled,
            derive_seed(seed, &[TAG_PREDICTION, t]),
            derive_seed(seed, &[TAG_SELECTION, t]),
        )?;
        let train_seconds = seconds(clock, train_start);
        let accuracy = prediction.accuracy(ds, ds.test_indices())?;

        let unlabeled = pool.unlabeled();
        let query_seed = derive_seed(seed, &[TAG_QUERY, t]);
        let query_start = clock.now();
        let report = score_pool(cfg, ds, &labeled, &unlabeled, &prediction, &scorer, query_seed)?;
        let batch = query(cfg, &unlabeled, report.as_ref(), query_seed)?;
        let query_seconds = seconds(clock, query_start).max(0.001);

        pool.reveal(&batch)?;
        iterations.push(IterationRecord {
            iteration: t as usize,
            accuracy,
            query_seconds,
            train_seconds,
            queried_indices: batch,
        });
    }
    Ok(RepetitionResult {
        repetition,
        initial_indices: initial,
        iterations,
        passive: None,
    })
}

/// Runs every repetition sequentially.
pub fn run_experiment(cfg: &ExperimentConfig, ds: &Dataset, clock: &dyn Clock) -> Result<ExperimentResult> {
    let repetitions = (0..cfg.repetitions)
        .map(|r| run_repetition(cfg, ds, r, clock))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentResult {
        dataset: cfg.dataset.clone(),
        method: cfg.method,
        clip_fraction: cfg.clip_fraction,
        repetitions,
    })
}
