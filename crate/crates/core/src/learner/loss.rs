//! Training objectives over logit matrices.
//!
//! Every loss is averaged over the samples (rows). The `*_with_grad` variants
//! also return the gradient of that mean with respect to the logits, which
//! the network backpropagates.

use ndarray::{Array2, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{digamma, ln_gamma, log_sum_exp, trigamma};

/// The loss a learner is trained with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossKind {
    CrossEntropy,
    /// Cross-entropy against targets with `alpha` of the mass spread over
    /// the other classes.
    LabelSmoothing {
        alpha: f64,
    },
    /// Negative log of the inhibited softmax plus `lambda` times the mean
    /// true-class logit.
    Inhibited {
        alpha: f64,
        lambda: f64,
    },
    /// Dirichlet sum-of-squares loss whose KL term is annealed linearly from
    /// 0 to 1 over `anneal_epochs`.
    Evidential {
        anneal_epochs: usize,
    },
}

impl LossKind {
    /// Mean loss and its logit gradient. `anneal` is only read by the
    /// evidential loss.
    pub fn evaluate(&self, logits: ArrayView2<'_, f64>, labels: &[usize], anneal: f64) -> (f64, Array2<f64>) {
        match *self {
            LossKind::CrossEntropy => cross_entropy_with_grad(logits, labels),
            LossKind::LabelSmoothing { alpha } => label_smoothing_with_grad(logits, labels, alpha),
            LossKind::Inhibited { alpha, lambda } => inhibited_with_grad(logits, labels, alpha, lambda),
            LossKind::Evidential { .. } => evidential_with_grad(logits, labels, anneal),
        }
    }

    /// KL coefficient used during `epoch` (0-based).
    pub fn anneal_coefficient(&self, epoch: usize) -> f64 {
        match *self {
            LossKind::Evidential { anneal_epochs } if anneal_epochs > 0 => {
                (epoch as f64 / anneal_epochs as f64).min(1.0)
            }
            _ => 1.0,
        }
    }
}

fn check_shape(logits: &ArrayView2<'_, f64>, labels: &[usize]) {
    assert_eq!(logits.nrows(), labels.len(), "one label per logit row");
    assert!(labels.iter().all(|&y| y < logits.ncols()), "label out of range");
}

pub fn cross_entropy(logits: ArrayView2<'_, f64>, labels: &[usize]) -> f64 {
    cross_entropy_with_grad(logits, labels).0
}

pub fn cross_entropy_with_grad(logits: ArrayView2<'_, f64>, labels: &[usize]) -> (f64, Array2<f64>) {
    check_shape(&logits, labels);
    let m = logits.nrows() as f64;
    let mut grad = Array2::zeros(logits.raw_dim());
    let mut total = 0.0;
    for ((row, mut g), &y) in logits.outer_iter().zip(grad.outer_iter_mut()).zip(labels) {
        let lse = log_sum_exp(row.iter().copied());
        total += lse - row[y];
        Zip::from(&mut g).and(&row).for_each(|g, &z| *g = (z - lse).exp() / m);
        g[y] -= 1.0 / m;
    }
    (total / m, grad)
}

/// Cross-entropy against smoothed targets: `1 - alpha` on the true class and
/// `alpha / (K - 1)` on each other class.
pub fn label_smoothing(logits: ArrayView2<'_, f64>, labels: &[usize], alpha: f64) -> Result<f64> {
    if logits.ncols() < 2 {
        return Err(Error::invalid("label smoothing needs at least two classes"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!(
            "label smoothing alpha must lie in (0, 1), got {alpha}"
        )));
    }
    Ok(label_smoothing_with_grad(logits, labels, alpha).0)
}

pub fn label_smoothing_with_grad(logits: ArrayView2<'_, f64>, labels: &[usize], alpha: f64) -> (f64, Array2<f64>) {
    check_shape(&logits, labels);
    let m = logits.nrows() as f64;
    let k = logits.ncols();
    let off = alpha / (k as f64 - 1.0);
    let mut grad = Array2::zeros(logits.raw_dim());
    let mut total = 0.0;
    for ((row, mut g), &y) in logits.outer_iter().zip(grad.outer_iter_mut()).zip(labels) {
        let lse = log_sum_exp(row.iter().copied());
        for c in 0..k {
            let target = if c == y { 1.0 - alpha } else { off };
            let log_p = row[c] - lse;
            total -= target * log_p;
            g[c] = (log_p.exp() - target) / m;
        }
    }
    (total / m, grad)
}

/// `-ln(exp(z_y) / (Σ exp(z_j) + exp(alpha))) + lambda * z_y`, averaged.
pub fn inhibited(logits: ArrayView2<'_, f64>, labels: &[usize], alpha: f64, lambda: f64) -> f64 {
    inhibited_with_grad(logits, labels, alpha, lambda).0
}

pub fn inhibited_with_grad(
    logits: ArrayView2<'_, f64>,
    labels: &[usize],
    alpha: f64,
    lambda: f64,
) -> (f64, Array2<f64>) {
    check_shape(&logits, labels);
    let m = logits.nrows() as f64;
    let mut grad = Array2::zeros(logits.raw_dim());
    let mut total = 0.0;
    for ((row, mut g), &y) in logits.outer_iter().zip(grad.outer_iter_mut()).zip(labels) {
        let lse = log_sum_exp(row.iter().copied().chain(std::iter::once(alpha)));
        total += lse - row[y] + lambda * row[y];
        Zip::from(&mut g).and(&row).for_each(|g, &z| *g = (z - lse).exp() / m);
        g[y] += (lambda - 1.0) / m;
    }
    (total / m, grad)
}

/// Evidential sum-of-squares loss plus `anneal` times the KL divergence of
/// the misleading-evidence Dirichlet from the uniform Dirichlet.
pub fn evidential(logits: ArrayView2<'_, f64>, labels: &[usize], anneal: f64) -> f64 {
    evidential_with_grad(logits, labels, anneal).0
}

pub fn evidential_with_grad(logits: ArrayView2<'_, f64>, labels: &[usize], anneal: f64) -> (f64, Array2<f64>) {
    check_shape(&logits, labels);
    let m = logits.nrows() as f64;
    let k = logits.ncols();
    let kf = k as f64;
    let mut grad = Array2::zeros(logits.raw_dim());
    let mut total = 0.0;
    let mut dp = vec![0.0; k];
    for ((row, mut g), &y) in logits.outer_iter().zip(grad.outer_iter_mut()).zip(labels) {
        let alpha: Vec<f64> = row.iter().map(|&z| z.max(0.0) + 1.0).collect();
        let s: f64 = alpha.iter().sum();
        let target = |c: usize| if c == y { 1.0 } else { 0.0 };

        let mut ds_explicit = 0.0;
        for c in 0..k {
            let p = alpha[c] / s;
            total += (target(c) - p).powi(2) + p * (1.0 - p) / (s + 1.0);
            dp[c] = -2.0 * (target(c) - p) + (1.0 - 2.0 * p) / (s + 1.0);
            ds_explicit -= p * (1.0 - p) / (s + 1.0).powi(2);
        }
        let dp_mean: f64 = (0..k).map(|c| dp[c] * alpha[c] / s).sum();

        // KL(Dir(a~) || Dir(1)) with the true-class parameter reset to 1.
        let tilde: Vec<f64> = (0..k).map(|c| if c == y { 1.0 } else { alpha[c] }).collect();
        let s_tilde: f64 = tilde.iter().sum();
        if anneal != 0.0 {
            let psi_s = digamma(s_tilde);
            let kl = ln_gamma(s_tilde) - ln_gamma(kf)
                + tilde
                    .iter()
                    .map(|&a| -ln_gamma(a) + (a - 1.0) * (digamma(a) - psi_s))
                    .sum::<f64>();
            total += anneal * kl;
        }
        let tri_s = trigamma(s_tilde);

        for c in 0..k {
            let mut d_alpha = (dp[c] - dp_mean) / s + ds_explicit;
            if anneal != 0.0 && c != y {
                d_alpha += anneal * ((tilde[c] - 1.0) * trigamma(tilde[c]) - (s_tilde - kf) * tri_s);
            }
            g[c] = if row[c] > 0.0 { d_alpha / m } else { 0.0 };
        }
    }
    (total / m, grad)
}
