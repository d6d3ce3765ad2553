//! ROC curves and the Mann–Whitney AUC.

use std::cmp::Ordering;

use crate::data::Label;
use crate::error::{Error, Result};

/// Points from `(0, 0)` to `(1, 1)`; `thresholds[i]` is the score cut that
/// produces `points[i]` (samples with score ≥ threshold are called fake).
#[derive(Clone, Debug, PartialEq)]
pub struct RocCurve {
    /// `(false positive rate, true positive rate)`.
    pub points: Vec<(f64, f64)>,
    pub thresholds: Vec<f64>,
}

impl RocCurve {
    /// Trapezoidal area under the curve.
    pub fn area(&self) -> f64 {
        self.points.windows(2).map(|p| (p[1].0 - p[0].0) * (p[1].1 + p[0].1) / 2.0).sum()
    }
}

/// Tie groups in ascending score order as `(score, n_real, n_fake)`.
fn tie_groups(scores: &[f64], labels: &[Label]) -> Result<(Vec<(f64, u64, u64)>, u64, u64)> {
    if scores.len() != labels.len() {
        return Err(Error::shape(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::NonFinite(format!("score {i} is NaN")));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(Ordering::Equal));
    let mut groups: Vec<(f64, u64, u64)> = Vec::new();
    for i in order {
        let fake = u64::from(labels[i] == Label::Fake);
        match groups.last_mut() {
            Some(g) if g.0 == scores[i] => {
                g.1 += 1 - fake;
                g.2 += fake;
            }
            _ => groups.push((scores[i], 1 - fake, fake)),
        }
    }
    let n_fake: u64 = groups.iter().map(|g| g.2).sum();
    let n_real = scores.len() as u64 - n_fake;
    if n_fake == 0 || n_real == 0 {
        return Err(Error::invalid(format!("AUC needs both classes ({n_real} real, {n_fake} fake)")));
    }
    Ok((groups, n_real, n_fake))
}

/// Fraction of (fake, real) pairs ranked correctly, ties counting half.
/// Computed exactly in integers from a sorted sweep.
pub fn auc(scores: &[f64], labels: &[Label]) -> Result<f64> {
    let (groups, n_real, n_fake) = tie_groups(scores, labels)?;
    let mut reals_below: u128 = 0;
    let mut twice_credit: u128 = 0;
    for &(_, r, f) in &groups {
        twice_credit += f as u128 * (2 * reals_below + r as u128);
        reals_below += r as u128;
    }
    Ok(twice_credit as f64 / (2 * n_fake as u128 * n_real as u128) as f64)
}

/// ROC curve with one point per distinct score, sweeping the threshold
/// from above the maximum down to the minimum.
pub fn roc_points(scores: &[f64], labels: &[Label]) -> Result<RocCurve> {
    let (groups, n_real, n_fake) = tie_groups(scores, labels)?;
    let mut points = vec![(0.0, 0.0)];
    let mut thresholds = vec![f64::INFINITY];
    let (mut fp, mut tp) = (0u64, 0u64);
    for &(s, r, f) in groups.iter().rev() {
        fp += r;
        tp += f;
        points.push((fp as f64 / n_real as f64, tp as f64 / n_fake as f64));
        thresholds.push(s);
    }
    Ok(RocCurve { points, thresholds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn labels(bits: &[u8]) -> Vec<Label> {
        bits.iter().map(|&b| Label::from_index(b).unwrap()).collect()
    }

    #[test]
    fn perfect_and_tied() {
        assert_eq!(auc(&[0.9, 0.1], &labels(&[1, 0])).unwrap(), 1.0);
        assert_eq!(auc(&[0.1, 0.9], &labels(&[1, 0])).unwrap(), 0.0);
        assert_eq!(auc(&[0.3; 6], &labels(&[1, 0, 1, 0, 0, 1])).unwrap(), 0.5);
        let roc = roc_points(&[0.9, 0.8, 0.2, 0.1], &labels(&[1, 1, 0, 0])).unwrap();
        assert!(roc.points.contains(&(0.0, 1.0)));
        assert_eq!(roc.points.first(), Some(&(0.0, 0.0)));
        assert_eq!(roc.points.last(), Some(&(1.0, 1.0)));
    }

    #[test]
    fn single_class_is_an_error() {
        assert!(auc(&[0.1, 0.2], &labels(&[1, 1])).is_err());
        assert!(roc_points(&[0.1], &labels(&[0])).is_err());
        assert!(auc(&[f64::NAN, 0.2], &labels(&[1, 0])).is_err());
    }

    #[test]
    fn null_scores_are_near_chance() {
        let mut rng = Rng::new(12);
        let s: Vec<f64> = (0..200).map(|_| rng.next_f64()).collect();
        let l: Vec<Label> = (0..200).map(|i| Label::from_index((i % 2) as u8).unwrap()).collect();
        let a = roc_points(&s, &l).unwrap().area();
        assert!((a - 0.5).abs() < 0.1, "{a}");
    }

    #[test]
    fn curve_is_monotone() {
        let mut rng = Rng::new(3);
        let s: Vec<f64> = (0..40).map(|_| (rng.next_f64() * 5.0).floor()).collect();
        let l: Vec<Label> = (0..40).map(|_| Label::from_index(rng.below(2) as u8).unwrap()).collect();
        let roc = roc_points(&s, &l).unwrap();
        for w in roc.points.windows(2) {
            assert!(w[1].0 >= w[0].0 && w[1].1 >= w[0].1);
        }
        assert!(roc.thresholds.windows(2).all(|t| t[1] < t[0]));
    }
}
