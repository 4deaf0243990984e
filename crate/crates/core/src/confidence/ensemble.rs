//! Committee disagreement over independently seeded members.

use ndarray::{Array2, Axis};

use super::ConfidenceReport;
use crate::error::{Error, Result};
use crate::math::argmax;

/// Lower bound applied to probabilities inside logarithms.
pub const KLD_FLOOR: f64 = 1e-12;

fn mean_distribution(members: &[Array2<f64>]) -> Result<Array2<f64>> {
    let first = members
        .first()
        .ok_or_else(|| Error::invalid("ensemble has no members"))?;
    if members.len() < 2 {
        log::warn!("committee of one member: disagreement is always zero");
    }
    if members.iter().any(|m| m.raw_dim() != first.raw_dim()) {
        return Err(Error::invalid("ensemble members disagree on shape"));
    }
    let mut sum = Array2::zeros(first.raw_dim());
    for m in members {
        sum += m;
    }
    Ok(sum / members.len() as f64)
}

/// Vote entropy of the members' hard predictions.
///
/// The predicted class is the plurality vote (lowest id on ties) and the
/// distribution is the mean member distribution.
pub fn ensemble_vote_entropy(members: &[Array2<f64>]) -> Result<ConfidenceReport> {
    let consensus = mean_distribution(members)?;
    let (m, k) = consensus.dim();
    let e = members.len() as f64;
    let mut predicted = Vec::with_capacity(m);
    let mut uncertainty = Vec::with_capacity(m);
    let mut votes = vec![0usize; k];
    for i in 0..m {
        votes.fill(0);
        for member in members {
            votes[argmax(member.row(i).iter().copied())] += 1;
        }
        let ve: f64 = votes
            .iter()
            .filter(|&&v| v > 0)
            .map(|&v| {
                let share = v as f64 / e;
                -share * share.ln()
            })
            .sum();
        predicted.push(argmax(votes.iter().map(|&v| v as f64)));
        uncertainty.push(ve);
    }
    let confidence = predicted.iter().enumerate().map(|(i, &c)| consensus[[i, c]]).collect();
    Ok(ConfidenceReport {
        distributions: consensus,
        predicted,
        confidence,
        uncertainty,
    })
}

/// Mean KL divergence of each member from the consensus distribution.
pub fn ensemble_kld(members: &[Array2<f64>]) -> Result<ConfidenceReport> {
    let consensus = mean_distribution(members)?;
    let e = members.len() as f64;
    let mut divergence = Array2::<f64>::zeros(consensus.raw_dim());
    for member in members {
        ndarray::Zip::from(&mut divergence)
            .and(member)
            .and(&consensus)
            .for_each(|d, &p, &q| {
                if p > 0.0 {
                    *d += p * (p.max(KLD_FLOOR) / q.max(KLD_FLOOR)).ln();
                }
            });
    }
    let kld: Vec<f64> = divergence.sum_axis(Axis(1)).iter().map(|s| (s / e).max(0.0)).collect();
    let mut report = ConfidenceReport::least_confidence(consensus);
    report.uncertainty = kld;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn one_hot_members(classes: &[usize], k: usize) -> Vec<Array2<f64>> {
        classes
            .iter()
            .map(|&c| {
                let mut m = Array2::from_elem((1, k), 0.1 / (k as f64 - 1.0));
                m[[0, c]] = 0.9;
                m
            })
            .collect()
    }

    #[test]
    fn unanimous_vote_has_zero_entropy() {
        let r = ensemble_vote_entropy(&one_hot_members(&[1, 1, 1, 1, 1], 3)).unwrap();
        assert_eq!(r.uncertainty[0], 0.0);
        assert_eq!(r.predicted[0], 1);
    }

    #[test]
    fn three_two_split() {
        let r = ensemble_vote_entropy(&one_hot_members(&[0, 1, 0, 1, 0], 2)).unwrap();
        let expected = -(0.6f64 * 0.6f64.ln() + 0.4 * 0.4f64.ln());
        assert!((r.uncertainty[0] - expected).abs() < 1e-12);
        assert!((r.uncertainty[0] - 0.6730).abs() < 1e-4);
        assert_eq!(r.predicted[0], 0);
    }

    #[test]
    fn uniform_vote_is_maximal() {
        let r = ensemble_vote_entropy(&one_hot_members(&[0, 1, 2, 3], 4)).unwrap();
        assert!((r.uncertainty[0] - 4f64.ln()).abs() < 1e-12);
        // Four-way tie goes to the lowest class id.
        assert_eq!(r.predicted[0], 0);
    }

    #[test]
    fn kld_of_identical_members_is_zero() {
        let m = array![[0.2, 0.5, 0.3], [0.9, 0.05, 0.05]];
        let r = ensemble_kld(&vec![m.clone(); 5]).unwrap();
        assert!(r.uncertainty.iter().all(|&u| (0.0..=1e-12).contains(&u)));
        assert_eq!(r.predicted, vec![1, 0]);
    }

    #[test]
    fn kld_of_opposed_members_is_ln2() {
        let eps = 1e-6;
        let members = vec![array![[1.0 - eps, eps]], array![[eps, 1.0 - eps]]];
        let r = ensemble_kld(&members).unwrap();
        // Closed form: (1-ε) ln(2(1-ε)) + ε ln(2ε).
        let exact = (1.0 - eps) * (2.0 * (1.0 - eps)).ln() + eps * (2.0 * eps).ln();
        assert!((r.uncertainty[0] - exact).abs() < 1e-12);
        assert!((r.uncertainty[0] - 2f64.ln()).abs() < 1e-4);
    }

    #[test]
    fn rejects_empty_and_ragged_committees() {
        assert!(ensemble_kld(&[]).is_err());
        assert!(ensemble_vote_entropy(&[Array2::zeros((1, 2)), Array2::zeros((2, 2))]).is_err());
    }
}
