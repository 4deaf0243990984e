//! Query strategies and uncertainty clipping.
//!
//! Ranked strategies sort the pool most-uncertain-first (ties by ascending
//! sample index), drop the clipped prefix and return the next `batch_size`
//! samples.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;

use crate::confidence::ConfidenceReport;
use crate::error::{Error, Result};
use crate::math::entropy;
use crate::rng::rng_from_seed;

pub const DEFAULT_CLIP_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StrategyKind {
    LeastConfidence,
    Entropy,
    Margin,
    Random,
}

impl StrategyKind {
    pub fn id(self) -> &'static str {
        match self {
            StrategyKind::LeastConfidence => "lc",
            StrategyKind::Entropy => "ent",
            StrategyKind::Margin => "mm",
            StrategyKind::Random => "rand",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lc" => Ok(StrategyKind::LeastConfidence),
            "ent" => Ok(StrategyKind::Entropy),
            "mm" => Ok(StrategyKind::Margin),
            "rand" => Ok(StrategyKind::Random),
            other => Err(Error::UnknownMethod(other.to_string())),
        }
    }
}

/// One query against the unlabeled pool. `reports` row `i` describes
/// `pool[i]`.
#[derive(Debug, Clone, Copy)]
pub struct QueryRequest<'a> {
    pub pool: &'a [usize],
    pub batch_size: usize,
    pub reports: Option<&'a ConfidenceReport>,
    pub clip_fraction: f64,
    pub seed: u64,
}

impl<'a> QueryRequest<'a> {
    pub fn new(pool: &'a [usize], batch_size: usize) -> Self {
        Self {
            pool,
            batch_size,
            reports: None,
            clip_fraction: 0.0,
            seed: 0,
        }
    }

    pub fn with_reports(mut self, reports: &'a ConfidenceReport) -> Self {
        self.reports = Some(reports);
        self
    }

    pub fn with_clip(mut self, clip_fraction: f64) -> Self {
        self.clip_fraction = clip_fraction;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn reports(&self) -> Result<&'a ConfidenceReport> {
        let r = self
            .reports
            .ok_or_else(|| Error::invalid("ranked strategy needs confidence reports"))?;
        if r.len() != self.pool.len() {
            return Err(Error::invalid(format!(
                "{} reports for a pool of {}",
                r.len(),
                self.pool.len()
            )));
        }
        Ok(r)
    }

    /// Clips and takes the batch from a most-uncertain-first ranking.
    fn finish(&self, ranked: Vec<usize>) -> Result<Vec<usize>> {
        let mut rest = apply_clipping(&ranked, self.pool.len(), self.clip_fraction)?;
        if rest.len() < self.batch_size {
            return Err(Error::PoolExhausted {
                available: rest.len(),
                requested: self.batch_size,
            });
        }
        rest.truncate(self.batch_size);
        Ok(rest)
    }
}

/// Number of samples clipping removes from a pool of `pool_size`.
pub fn clip_count(pool_size: usize, clip_fraction: f64) -> usize {
    // Tolerance keeps e.g. 0.05 * 100 from rounding up to 6.
    let raw = clip_fraction * pool_size as f64;
    ((raw - 1e-9).ceil().max(0.0) as usize).min(pool_size)
}

/// Drops the `ceil(clip_fraction * pool_size)` most uncertain entries.
pub fn apply_clipping(ranked: &[usize], pool_size: usize, clip_fraction: f64) -> Result<Vec<usize>> {
    if !(0.0..1.0).contains(&clip_fraction) {
        return Err(Error::invalid(format!(
            "clip_fraction must lie in [0, 1), got {clip_fraction}"
        )));
    }
    let drop = clip_count(pool_size, clip_fraction).min(ranked.len());
    Ok(ranked[drop..].to_vec())
}

/// Pool samples sorted by `score` descending, ties by ascending sample index.
fn rank_descending(pool: &[usize], scores: impl Fn(usize) -> f64) -> Vec<usize> {
    let mut order: Vec<(usize, f64)> = pool.iter().enumerate().map(|(i, &s)| (s, scores(i))).collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    order.into_iter().map(|(s, _)| s).collect()
}

/// Lowest predicted-class probability first.
pub fn least_confidence(req: &QueryRequest<'_>) -> Result<Vec<usize>> {
    let r = req.reports()?;
    req.finish(rank_descending(req.pool, |i| 1.0 - r.confidence[i]))
}

/// Highest method-specific uncertainty first. Equals [`least_confidence`]
/// for reports whose uncertainty is `1 - confidence`.
pub fn max_uncertainty(req: &QueryRequest<'_>) -> Result<Vec<usize>> {
    let r = req.reports()?;
    req.finish(rank_descending(req.pool, |i| r.uncertainty[i]))
}

/// Highest entropy of the class distribution first.
pub fn entropy_strategy(req: &QueryRequest<'_>) -> Result<Vec<usize>> {
    let r = req.reports()?;
    req.finish(rank_descending(req.pool, |i| {
        entropy(r.distributions.row(i).iter().copied())
    }))
}

/// Gap between the two most probable classes.
pub fn margin(distribution: impl IntoIterator<Item = f64>) -> f64 {
    let (mut first, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in distribution {
        if p > first {
            second = first;
            first = p;
        } else if p > second {
            second = p;
        }
    }
    first - second
}

/// Smallest margin first.
pub fn margin_strategy(req: &QueryRequest<'_>) -> Result<Vec<usize>> {
    let r = req.reports()?;
    if r.class_count() < 2 {
        return Err(Error::invalid("margin needs at least two classes"));
    }
    req.finish(rank_descending(req.pool, |i| {
        -margin(r.distributions.row(i).iter().copied())
    }))
}

/// Uniform draw without replacement. Clipping does not apply.
pub fn random_strategy(req: &QueryRequest<'_>) -> Result<Vec<usize>> {
    if req.batch_size > req.pool.len() {
        return Err(Error::PoolExhausted {
            available: req.pool.len(),
            requested: req.batch_size,
        });
    }
    let mut rng = rng_from_seed(req.seed);
    Ok(index::sample(&mut rng, req.pool.len(), req.batch_size)
        .into_iter()
        .map(|i| req.pool[i])
        .collect())
}

pub fn select(kind: StrategyKind, req: &QueryRequest<'_>) -> Result<Vec<usize>> {
    match kind {
        StrategyKind::LeastConfidence => least_confidence(req),
        StrategyKind::Entropy => entropy_strategy(req),
        StrategyKind::Margin => margin_strategy(req),
        StrategyKind::Random => random_strategy(req),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    fn report(rows: Array2<f64>) -> ConfidenceReport {
        ConfidenceReport::least_confidence(rows)
    }

    fn binary(confidences: &[f64]) -> ConfidenceReport {
        let rows: Vec<f64> = confidences.iter().flat_map(|&c| [c, 1.0 - c]).collect();
        report(Array2::from_shape_vec((confidences.len(), 2), rows).unwrap())
    }

    #[test]
    fn lc_picks_least_confident() {
        let r = binary(&[0.9, 0.5, 0.7]);
        let pool = [10, 11, 12];
        let req = QueryRequest::new(&pool, 1).with_reports(&r);
        assert_eq!(least_confidence(&req).unwrap(), vec![11]);
    }

    #[test]
    fn clipping_skips_top_five_percent() {
        // Sample i has the i-th highest uncertainty.
        let confidences: Vec<f64> = (0..100).map(|i| 0.5 + i as f64 / 250.0).collect();
        let r = binary(&confidences);
        let pool: Vec<usize> = (0..100).collect();
        let req = QueryRequest::new(&pool, 25).with_reports(&r).with_clip(0.05);
        assert_eq!(least_confidence(&req).unwrap(), (5..30).collect::<Vec<_>>());
    }

    #[test]
    fn ties_prefer_low_indices() {
        let r = binary(&[0.6; 6]);
        let pool = [9, 3, 7, 1, 5, 2];
        let req = QueryRequest::new(&pool, 3).with_reports(&r);
        assert_eq!(least_confidence(&req).unwrap(), vec![1, 2, 3]);
    }

    #[test]
    fn entropy_orders_by_spread() {
        let r = report(array![
            [1.0, 0.0, 0.0, 0.0],
            [0.25, 0.25, 0.25, 0.25],
            [0.5, 0.3, 0.2, 0.0]
        ]);
        let pool = [0, 1, 2];
        let req = QueryRequest::new(&pool, 3).with_reports(&r);
        assert_eq!(entropy_strategy(&req).unwrap(), vec![1, 2, 0]);
        let h = entropy([0.5, 0.3, 0.2]);
        let by_hand = -(0.5 * 0.5f64.ln() + 0.3 * 0.3f64.ln() + 0.2 * 0.2f64.ln());
        assert!((h - by_hand).abs() < 1e-15);
        assert!((h - 1.0297).abs() < 1e-4);
        assert_eq!(entropy([1.0, 0.0, 0.0, 0.0]), 0.0);
        assert!((entropy([0.25; 4]) - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn margin_values_and_order() {
        assert_eq!(margin([0.5, 0.5]), 0.0);
        assert_eq!(margin([1.0, 0.0]), 1.0);
        assert!((margin([0.6, 0.3, 0.1]) - 0.3).abs() < 1e-15);
        let r = report(array![[1.0, 0.0], [0.5, 0.5], [0.7, 0.3]]);
        let pool = [0, 1, 2];
        let req = QueryRequest::new(&pool, 2).with_reports(&r);
        assert_eq!(margin_strategy(&req).unwrap(), vec![1, 2]);
    }

    #[test]
    fn random_is_seeded_and_exhaustive() {
        let pool: Vec<usize> = (100..120).collect();
        let req = QueryRequest::new(&pool, 5).with_seed(3);
        assert_eq!(random_strategy(&req).unwrap(), random_strategy(&req).unwrap());
        let mut all = random_strategy(&QueryRequest::new(&pool, 20)).unwrap();
        all.sort_unstable();
        assert_eq!(all, pool);
        assert!(random_strategy(&QueryRequest::new(&pool, 21)).is_err());
    }

    #[test]
    fn random_is_uniform() {
        let pool = [0, 1, 2, 3];
        let mut counts = [0usize; 4];
        for seed in 0..10_000 {
            let pick = random_strategy(&QueryRequest::new(&pool, 1).with_seed(seed)).unwrap();
            counts[pick[0]] += 1;
        }
        for c in counts {
            assert!((c as f64 / 10_000.0 - 0.25).abs() < 0.02, "{counts:?}");
        }
    }

    #[test]
    fn clip_arithmetic() {
        assert_eq!(clip_count(100, 0.05), 5);
        assert_eq!(clip_count(10, 0.05), 1);
        assert_eq!(clip_count(7, 0.0), 0);
        assert_eq!(clip_count(1000, 0.07), 70);
        let ranked: Vec<usize> = (0..10).collect();
        assert_eq!(apply_clipping(&ranked, 10, 0.0).unwrap(), ranked);
        assert_eq!(apply_clipping(&ranked, 10, 0.05).unwrap(), (1..10).collect::<Vec<_>>());
        assert!(apply_clipping(&ranked, 10, 1.0).is_err());
    }

    #[test]
    fn pool_too_small_after_clipping() {
        let r = binary(&[0.5; 10]);
        let pool: Vec<usize> = (0..10).collect();
        let req = QueryRequest::new(&pool, 10).with_reports(&r).with_clip(0.05);
        assert!(matches!(
            least_confidence(&req),
            Err(Error::PoolExhausted {
                available: 9,
                requested: 10
            })
        ));
    }

    #[test]
    fn ids_round_trip() {
        for kind in [
            StrategyKind::LeastConfidence,
            StrategyKind::Entropy,
            StrategyKind::Margin,
            StrategyKind::Random,
        ] {
            assert_eq!(kind.id().parse::<StrategyKind>().unwrap(), kind);
        }
        assert!("bald".parse::<StrategyKind>().is_err());
    }
}
