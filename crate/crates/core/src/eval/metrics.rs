//! Accuracy, ROC and AUC over classifier scores.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    /// Counts at threshold `t` (positive iff `score ≥ t`).
    pub fn at(scores: &[f64], positive: &[bool], t: f64) -> Self {
        let mut c = Self::default();
        for (s, &p) in scores.iter().zip(positive) {
            match (*s >= t, p) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / (self.tp + self.tn + self.fp + self.fn_) as f64
    }

    /// Mean of the true positive and true negative rates.
    pub fn balanced_accuracy(&self) -> f64 {
        let tpr = self.tp as f64 / (self.tp + self.fn_).max(1) as f64;
        let tnr = self.tn as f64 / (self.tn + self.fp).max(1) as f64;
        0.5 * (tpr + tnr)
    }
}

/// Accuracy with per-sample weights.
pub fn weighted_accuracy(predicted: &[bool], positive: &[bool], weights: &[f64]) -> f64 {
    let mut hit = 0.0;
    let mut total = 0.0;
    for ((p, y), w) in predicted.iter().zip(positive).zip(weights) {
        if p == y {
            hit += w;
        }
        total += w;
    }
    hit / total
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// ROC over every distinct score, from `(0,0)` (threshold `+∞`) to `(1,1)`.
/// Tied scores move both rates in a single step.
pub fn roc_curve(scores: &[f64], positive: &[bool]) -> Vec<RocPoint> {
    let n_pos = positive.iter().filter(|p| **p).count() as f64;
    let n_neg = positive.len() as f64 - n_pos;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut out = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if positive[order[i]] {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        out.push(RocPoint {
            threshold: s,
            fpr: if n_neg > 0.0 { fp / n_neg } else { 0.0 },
            tpr: if n_pos > 0.0 { tp / n_pos } else { 0.0 },
        });
    }
    out
}

/// Area under the ROC by the trapezoid rule.
pub fn auc_trapezoid(roc: &[RocPoint]) -> f64 {
    roc.windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum()
}

/// Mann–Whitney estimate: fraction of positive/negative pairs ranked
/// correctly, ties counting one half.
pub fn auc_rank(scores: &[f64], positive: &[bool]) -> f64 {
    let n_pos = positive.iter().filter(|p| **p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return f64::NAN;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // midranks
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j + 1) as f64 / 2.0;
        rank_sum_pos += mid * order[i..j].iter().filter(|&&k| positive[k]).count() as f64;
        i = j;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    u / (n_pos * n_neg) as f64
}

pub fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn perfect_separation() {
        let s = [0.9, 0.8, 0.3, 0.1];
        let y = [true, true, false, false];
        let roc = roc_curve(&s, &y);
        assert_eq!(auc_trapezoid(&roc), 1.0);
        assert_eq!(auc_rank(&s, &y), 1.0);
        let last = roc.last().unwrap();
        assert_eq!((roc[0].fpr, roc[0].tpr, last.fpr, last.tpr), (0.0, 0.0, 1.0, 1.0));
        assert_eq!(Confusion::at(&s, &y, 0.5).accuracy(), 1.0);
    }

    #[test]
    fn all_tied_is_half() {
        let s = [0.5; 6];
        let y = [true, false, true, false, false, true];
        assert_eq!(auc_trapezoid(&roc_curve(&s, &y)), 0.5);
        assert_eq!(auc_rank(&s, &y), 0.5);
    }

    #[test]
    fn random_scores_near_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s: Vec<f64> = (0..1000).map(|_| rng.random()).collect();
        let y: Vec<bool> = (0..1000).map(|i| i % 2 == 0).collect();
        let auc = auc_trapezoid(&roc_curve(&s, &y));
        assert!((0.4..=0.6).contains(&auc));
    }

    #[test]
    fn balanced_accuracy_weights_classes() {
        let c = Confusion { tp: 10, fn_: 0, tn: 20, fp: 20 };
        assert_eq!(c.balanced_accuracy(), 0.75);
        let w = weighted_accuracy(&[true, false, false, false, false], &[true, false, false, true, true], &[1.0, 1.0, 1.0, 1.0, 1.0]);
        assert_eq!(w, 0.6);
    }

    proptest! {
        #[test]
        fn trapezoid_equals_rank(
            raw in proptest::collection::vec((0u8..20, any::<bool>()), 2..60),
        ) {
            let s: Vec<f64> = raw.iter().map(|r| r.0 as f64 / 3.0).collect();
            let y: Vec<bool> = raw.iter().map(|r| r.1).collect();
            prop_assume!(y.iter().any(|v| *v) && y.iter().any(|v| !*v));
            let roc = roc_curve(&s, &y);
            prop_assert!((auc_trapezoid(&roc) - auc_rank(&s, &y)).abs() < 1e-12);
            for w in roc.windows(2) {
                prop_assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
            }
        }

        #[test]
        fn auc_is_monotone_invariant(raw in proptest::collection::vec((-5.0f64..5.0, any::<bool>()), 2..40)) {
            let s: Vec<f64> = raw.iter().map(|r| r.0).collect();
            let y: Vec<bool> = raw.iter().map(|r| r.1).collect();
            prop_assume!(y.iter().any(|v| *v) && y.iter().any(|v| !*v));
            let t: Vec<f64> = s.iter().map(|v| v.exp() * 3.0 + 1.0).collect();
            prop_assert!((auc_trapezoid(&roc_curve(&s, &y)) - auc_trapezoid(&roc_curve(&t, &y))).abs() < 1e-12);
        }
    }
}
