//! Confidence-probability quantification.
//!
//! Every method produces a [`ConfidenceReport`]: a class distribution per
//! sample, the predicted class, the probability assigned to it, and a scalar
//! uncertainty. Query strategies rank by `uncertainty`, higher meaning less
//! confident; descending order matches each method's own selection
//! criterion.

mod ensemble;
mod temperature;
mod trust;

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::learner::{HeadKind, LearnerModel, LossKind};
use crate::math::{argmax, softmax_row};

pub use ensemble::{ensemble_kld, ensemble_vote_entropy, KLD_FLOOR};
pub use temperature::{fit_temperature, temperature_grid, temperature_scaled};
pub use trust::{trust_ratio, trust_score, TrustIndex, DEFAULT_TRUST_K};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceReport {
    /// `M × K`, one distribution per sample.
    pub distributions: Array2<f64>,
    pub predicted: Vec<usize>,
    /// Probability of the predicted class.
    pub confidence: Vec<f64>,
    pub uncertainty: Vec<f64>,
}

impl ConfidenceReport {
    /// Report whose prediction is the distribution argmax and whose
    /// uncertainty is `1 - confidence`.
    pub fn least_confidence(distributions: Array2<f64>) -> Self {
        let predicted: Vec<usize> = distributions.outer_iter().map(|r| argmax(r.iter().copied())).collect();
        let confidence: Vec<f64> = predicted
            .iter()
            .zip(distributions.outer_iter())
            .map(|(&c, r)| r[c])
            .collect();
        let uncertainty = confidence.iter().map(|c| 1.0 - c).collect();
        Self {
            distributions,
            predicted,
            confidence,
            uncertainty,
        }
    }

    pub fn len(&self) -> usize {
        self.predicted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predicted.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.distributions.ncols()
    }
}

/// Row-wise softmax of the logits.
pub fn softmax(logits: ArrayView2<'_, f64>) -> ConfidenceReport {
    let mut dist = Array2::zeros(logits.raw_dim());
    for (row, mut out) in logits.outer_iter().zip(dist.outer_iter_mut()) {
        out.assign(&softmax_row(row));
    }
    ConfidenceReport::least_confidence(dist)
}

/// `exp(z_i) / (Σ exp(z_j) + exp(alpha))`. Rows sum to less than one.
pub fn inhibited_softmax(logits: ArrayView2<'_, f64>, alpha: f64) -> ConfidenceReport {
    let mut dist = Array2::zeros(logits.raw_dim());
    for (row, mut out) in logits.outer_iter().zip(dist.outer_iter_mut()) {
        let max = row.iter().copied().fold(alpha, f64::max);
        let denom: f64 = row.iter().map(|z| (z - max).exp()).sum::<f64>() + (alpha - max).exp();
        out.assign(&row.mapv(|z| (z - max).exp() / denom));
    }
    ConfidenceReport::least_confidence(dist)
}

/// Dirichlet view of ReLU evidence: distribution `α / S`, uncertainty `K / S`.
pub fn evidential_confidence(logits: ArrayView2<'_, f64>) -> ConfidenceReport {
    let k = logits.ncols() as f64;
    let alpha = logits.mapv(|z| z.max(0.0) + 1.0);
    let strength = alpha.sum_axis(Axis(1));
    let dist = &alpha / &strength.view().insert_axis(Axis(1));
    let mut report = ConfidenceReport::least_confidence(dist);
    report.uncertainty = strength.iter().map(|s| k / s).collect();
    report
}

/// Mean softmax over `passes` dropout forward passes seeded
/// `base_seed, base_seed + 1, ...`.
pub fn mc_dropout(
    model: &LearnerModel,
    features: ArrayView2<'_, f64>,
    passes: usize,
    base_seed: u64,
) -> Result<ConfidenceReport> {
    if passes == 0 {
        return Err(Error::invalid("mc_dropout needs at least one pass"));
    }
    if model.dropout_rate() == 0.0 {
        log::warn!("mc_dropout on a model without dropout degenerates to softmax");
    }
    let mut sum = Array2::zeros((features.nrows(), model.class_count()));
    for pass in 0..passes as u64 {
        let logits = model.forward_logits(features, Some(base_seed.wrapping_add(pass)))?;
        sum += &softmax(logits.view()).distributions;
    }
    sum /= passes as f64;
    Ok(ConfidenceReport::least_confidence(sum))
}

/// Plain softmax of a model trained with label smoothing. The method only
/// changes training.
pub fn label_smoothing_confidence(model: &LearnerModel, features: ArrayView2<'_, f64>) -> Result<ConfidenceReport> {
    if !matches!(model.loss(), LossKind::LabelSmoothing { .. }) {
        log::warn!(
            "label smoothing confidence requested for a model trained with {:?}",
            model.loss()
        );
    }
    Ok(softmax(model.forward_logits(features, None)?.view()))
}

/// Scores `features` with the distribution matching the model's head.
pub fn head_confidence(model: &LearnerModel, features: ArrayView2<'_, f64>) -> Result<ConfidenceReport> {
    let logits = model.forward_logits(features, None)?;
    Ok(match (model.head(), model.loss()) {
        (HeadKind::Softmax, _) => softmax(logits.view()),
        (HeadKind::InhibitedSoftmax, LossKind::Inhibited { alpha, .. }) => inhibited_softmax(logits.view(), alpha),
        (HeadKind::InhibitedSoftmax, _) => {
            log::warn!("inhibited head without an inhibited loss; using alpha = 1");
            inhibited_softmax(logits.view(), 1.0)
        }
        (HeadKind::Evidential, _) => evidential_confidence(logits.view()),
    })
}
