//! Post-hoc temperature scaling.

use ndarray::ArrayView2;

use super::{softmax, ConfidenceReport};
use crate::error::{Error, Result};
use crate::learner::loss::cross_entropy;

/// `0.01, 0.02, ..., 10.00`.
pub fn temperature_grid() -> impl Iterator<Item = f64> {
    (1..=1000).map(|i| i as f64 / 100.0)
}

pub fn temperature_scaled(logits: ArrayView2<'_, f64>, temperature: f64) -> Result<ConfidenceReport> {
    if temperature.is_nan() || temperature <= 0.0 {
        return Err(Error::invalid(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    Ok(softmax((&logits / temperature).view()))
}

/// Grid temperature minimising mean cross-entropy on the labeled logits;
/// ties resolve to the smallest temperature.
pub fn fit_temperature(logits: ArrayView2<'_, f64>, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::invalid("fit_temperature needs at least one labeled sample"));
    }
    let mut best = (f64::INFINITY, 1.0);
    for t in temperature_grid() {
        let nll = cross_entropy((&logits / t).view(), labels);
        if nll < best.0 {
            best = (nll, t);
        }
    }
    Ok(best.1)
}
