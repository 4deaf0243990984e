//! Trust score: how much closer a sample lies to its predicted class than to
//! any other class, measured against the labeled data.

use ndarray::{Array2, ArrayView1, ArrayView2};

use super::ConfidenceReport;
use crate::data::Dataset;
use crate::error::{Error, Result};

pub const DEFAULT_TRUST_K: usize = 10;

fn distance(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Labeled points per class that survive density filtering.
#[derive(Debug, Clone, PartialEq)]
pub struct TrustIndex {
    classes: Vec<Array2<f64>>,
    k: usize,
}

impl TrustIndex {
    /// Drops, per class, the `density_fraction` of points with the largest
    /// distance to their k-th nearest same-class neighbour. Classes with
    /// fewer than `k + 1` points are kept whole.
    pub fn build(ds: &Dataset, labeled: &[usize], k: usize, density_fraction: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("trust score needs k >= 1"));
        }
        if !(0.0..1.0).contains(&density_fraction) {
            return Err(Error::invalid("density_fraction must lie in [0, 1)"));
        }
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); ds.class_count()];
        for &i in labeled {
            members[ds.labels()[i]].push(i);
        }
        let classes = members
            .iter()
            .map(|idx| {
                let points = ds.select_features(idx);
                if idx.len() < k + 1 || density_fraction == 0.0 {
                    return points;
                }
                let radii: Vec<f64> = points
                    .outer_iter()
                    .enumerate()
                    .map(|(i, p)| {
                        let mut d: Vec<f64> = points
                            .outer_iter()
                            .enumerate()
                            .filter(|&(j, _)| j != i)
                            .map(|(_, q)| distance(p, q))
                            .collect();
                        d.sort_by(f64::total_cmp);
                        d[k - 1]
                    })
                    .collect();
                let drop = ((density_fraction * idx.len() as f64).floor() as usize).min(idx.len() - 1);
                let mut order: Vec<usize> = (0..idx.len()).collect();
                order.sort_by(|&a, &b| radii[a].total_cmp(&radii[b]).then(a.cmp(&b)));
                let mut keep = order[..idx.len() - drop].to_vec();
                keep.sort_unstable();
                points.select(ndarray::Axis(0), &keep)
            })
            .collect();
        Ok(Self { classes, k })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Retained points of `class`.
    pub fn retained(&self, class: usize) -> ArrayView2<'_, f64> {
        self.classes[class].view()
    }

    /// Distance from `x` to the nearest retained point of every class;
    /// `+inf` for classes without labeled points.
    pub fn class_distances(&self, x: ArrayView1<'_, f64>) -> Vec<f64> {
        self.classes
            .iter()
            .map(|pts| pts.outer_iter().map(|p| distance(x, p)).fold(f64::INFINITY, f64::min))
            .collect()
    }
}

/// Ratio of the distance to the closest other class over the distance to
/// the predicted class.
pub fn trust_ratio(distances: &[f64], predicted: usize) -> f64 {
    let own = distances[predicted];
    let other = distances
        .iter()
        .enumerate()
        .filter(|&(c, _)| c != predicted)
        .map(|(_, &d)| d)
        .fold(f64::INFINITY, f64::min);
    if own == 0.0 {
        f64::INFINITY
    } else if own.is_infinite() && other.is_infinite() {
        1.0
    } else {
        other / own
    }
}

/// Re-scores `base` (the selection model's softmax report) by trust:
/// distribution and prediction are kept, uncertainty becomes `1 / (1 + ts)`.
pub fn trust_score(
    index: &TrustIndex,
    features: ArrayView2<'_, f64>,
    base: &ConfidenceReport,
) -> Result<ConfidenceReport> {
    if features.nrows() != base.len() {
        return Err(Error::invalid("trust_score needs one base prediction per sample"));
    }
    let mut report = base.clone();
    for (i, x) in features.outer_iter().enumerate() {
        let ts = trust_ratio(&index.class_distances(x), base.predicted[i]);
        report.uncertainty[i] = 1.0 / (1.0 + ts);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::confidence::softmax;
    use ndarray::array;

    fn two_points() -> Dataset {
        Dataset::new(array![[0.0, 0.0], [4.0, 0.0]], vec![0, 1], None).unwrap()
    }

    #[test]
    fn equidistant_sample_has_unit_trust() {
        let ds = two_points();
        let index = TrustIndex::build(&ds, &[0, 1], 10, 0.0).unwrap();
        let x = array![[2.0, 3.0]];
        let base = softmax(array![[1.0, 0.0]].view());
        let r = trust_score(&index, x.view(), &base).unwrap();
        assert_eq!(r.uncertainty[0], 0.5);
        assert_eq!(r.distributions, base.distributions);
    }

    #[test]
    fn hand_computed_ratio() {
        let ds = Dataset::new(array![[0.0, 0.0], [1.0, 0.0], [5.0, 0.0]], vec![0, 0, 1], None).unwrap();
        let index = TrustIndex::build(&ds, &[0, 1, 2], 1, 0.0).unwrap();
        let x = array![[2.0, 0.0]];
        // Nearest class-0 point at distance 1, class-1 point at distance 3.
        let base = softmax(array![[0.0, 1.0]].view());
        let r = trust_score(&index, x.view(), &base).unwrap();
        // Predicted class 1: ts = 1 / 3.
        assert!((r.uncertainty[0] - 1.0 / (1.0 + 1.0 / 3.0)).abs() < 1e-15);
        let base = softmax(array![[1.0, 0.0]].view());
        let r = trust_score(&index, x.view(), &base).unwrap();
        assert!((r.uncertainty[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn exact_hit_has_zero_uncertainty() {
        let ds = two_points();
        let index = TrustIndex::build(&ds, &[0, 1], 3, 0.0).unwrap();
        let base = softmax(array![[1.0, 0.0]].view());
        let r = trust_score(&index, array![[0.0, 0.0]].view(), &base).unwrap();
        assert_eq!(r.uncertainty[0], 0.0);
    }

    #[test]
    fn absent_class_is_infinitely_far() {
        let ds = two_points();
        let index = TrustIndex::build(&ds, &[0], 3, 0.0).unwrap();
        assert!(index.retained(1).nrows() == 0);
        let d = index.class_distances(array![1.0, 0.0].view());
        assert_eq!(d, vec![1.0, f64::INFINITY]);
    }

    #[test]
    fn density_filter_drops_far_point() {
        // Ten tight points and one far point per class.
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (class, origin) in [(0usize, 0.0), (1, 100.0)] {
            for i in 0..10 {
                rows.extend_from_slice(&[origin + 0.1 * i as f64, 0.0]);
                labels.push(class);
            }
            rows.extend_from_slice(&[origin + 20.0, 20.0]);
            labels.push(class);
        }
        let ds = Dataset::new(Array2::from_shape_vec((22, 2), rows).unwrap(), labels, None).unwrap();
        let all: Vec<usize> = (0..22).collect();
        let index = TrustIndex::build(&ds, &all, 3, 0.1).unwrap();
        for class in 0..2 {
            let kept = index.retained(class);
            assert_eq!(kept.nrows(), 10);
            assert!(kept.outer_iter().all(|p| p[1] == 0.0));
        }
        let unfiltered = TrustIndex::build(&ds, &all, 3, 0.0).unwrap();
        assert_eq!(unfiltered.retained(0).nrows(), 11);
    }
}
