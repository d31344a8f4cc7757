//! Scalar classification metrics.

use super::EvalError;

/// Area under the ROC curve, computed as the Mann-Whitney statistic:
/// the fraction of (positive, negative) pairs ranked correctly, with
/// ties counted as one half.
///
/// Implemented with tie-averaged ranks in O(n log n). Ranks are kept as
/// doubled integers so the result is bit-identical to the pairwise
/// counting definition.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64, EvalError> {
    assert_eq!(scores.len(), labels.len(), "scores/labels length mismatch");
    let pos = labels.iter().filter(|&&l| l).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(EvalError::SingleClass);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("non-finite score"));

    // Sum of doubled tie-averaged ranks over positives. For a tie run
    // occupying ranks i+1..=j (1-based), each member gets (i+1+j), i.e.
    // twice the average rank, which stays integral.
    let mut doubled_rank_sum: u64 = 0;
    let n = order.len();
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let doubled_rank = (i as u64 + 1) + (j as u64 + 1);
        for &idx in &order[i..=j] {
            if labels[idx] {
                doubled_rank_sum += doubled_rank;
            }
        }
        i = j + 1;
    }

    // doubled_rank_sum - 2*pos*(pos+1)/2 equals 2*wins + ties.
    let numerator = doubled_rank_sum - pos * (pos + 1);
    Ok(numerator as f64 / (2 * pos * neg) as f64)
}

/// Mean of true-positive and true-negative rates at a threshold.
/// A score greater than or equal to the threshold predicts positive.
pub fn balanced_accuracy(scores: &[f64], labels: &[bool], threshold: f64) -> Result<f64, EvalError> {
    assert_eq!(scores.len(), labels.len(), "scores/labels length mismatch");
    let (mut tp, mut fnc, mut tn, mut fp) = (0u64, 0u64, 0u64, 0u64);
    for (&s, &l) in scores.iter().zip(labels) {
        let pred = s >= threshold;
        match (l, pred) {
            (true, true) => tp += 1,
            (true, false) => fnc += 1,
            (false, false) => tn += 1,
            (false, true) => fp += 1,
        }
    }
    if tp + fnc == 0 || tn + fp == 0 {
        return Err(EvalError::SingleClass);
    }
    let tpr = tp as f64 / (tp + fnc) as f64;
    let tnr = tn as f64 / (tn + fp) as f64;
    Ok((tpr + tnr) / 2.0)
}

/// Exhaustive threshold search over the finite score set, maximizing
/// balanced accuracy. Candidate thresholds are every observed score plus
/// one cut above the maximum (the all-negative predictor).
pub fn best_threshold(scores: &[f64], labels: &[bool]) -> Result<(f64, f64), EvalError> {
    let mut candidates: Vec<f64> = scores.to_vec();
    let max = candidates
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    candidates.push(max + 1.0);
    let mut best = (f64::NEG_INFINITY, f64::NAN);
    for &t in &candidates {
        let ba = balanced_accuracy(scores, labels, t)?;
        if ba > best.0 {
            best = (ba, t);
        }
    }
    Ok((best.1, best.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    /// Independent O(n^2) pairwise oracle for the Mann-Whitney statistic.
    fn auc_pairwise_oracle(scores: &[f64], labels: &[bool]) -> f64 {
        let mut wins = 0u64;
        let mut ties = 0u64;
        let mut pairs = 0u64;
        for (i, &si) in scores.iter().enumerate() {
            if !labels[i] {
                continue;
            }
            for (j, &sj) in scores.iter().enumerate() {
                if labels[j] {
                    continue;
                }
                pairs += 1;
                if si > sj {
                    wins += 1;
                } else if si == sj {
                    ties += 1;
                }
            }
        }
        (2 * wins + ties) as f64 / (2 * pairs) as f64
    }

    #[test]
    fn auc_trivial_cases() {
        // Perfect separation.
        let s = [0.1, 0.2, 0.8, 0.9];
        let l = [false, false, true, true];
        assert_eq!(auc(&s, &l).unwrap(), 1.0);
        // All scores identical: every pair ties.
        let s = [0.5, 0.5, 0.5, 0.5];
        assert_eq!(auc(&s, &l).unwrap(), 0.5);
    }

    #[test]
    fn auc_four_pair_case() {
        // Pairs: (0.35,0.1)+, (0.35,0.4)-, (0.8,0.1)+, (0.8,0.4)+ -> 3/4.
        let s = [0.1, 0.4, 0.35, 0.8];
        let l = [false, false, true, true];
        assert_eq!(auc(&s, &l).unwrap(), 0.75);
        assert_eq!(auc_pairwise_oracle(&s, &l), 0.75);
    }

    #[test]
    fn auc_single_class_errors() {
        let s = [0.1, 0.2];
        assert!(matches!(auc(&s, &[true, true]), Err(EvalError::SingleClass)));
    }

    #[test]
    fn auc_matches_pairwise_oracle_exactly() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for trial in 0..100 {
            let n = rng.random_range(2..=200);
            // Quantized scores force plenty of ties.
            let scores: Vec<f64> = (0..n)
                .map(|_| (rng.random_range(0..20) as f64) / 20.0)
                .collect();
            let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
            labels[0] = true;
            labels[n - 1] = false;
            let fast = auc(&scores, &labels).unwrap();
            let slow = auc_pairwise_oracle(&scores, &labels);
            assert_eq!(fast, slow, "trial {trial}: {fast} vs {slow}");
        }
    }

    #[test]
    fn auc_invariant_under_monotone_transform() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let scores: Vec<f64> = (0..64).map(|_| rng.random::<f64>()).collect();
        let labels: Vec<bool> = (0..64).map(|i| i % 3 == 0).collect();
        let base = auc(&scores, &labels).unwrap();
        let squashed: Vec<f64> = scores.iter().map(|s| (3.0 * s + 1.0).tanh()).collect();
        assert!((auc(&squashed, &labels).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn balanced_accuracy_trivial_cases() {
        let s = [0.1, 0.2, 0.8, 0.9];
        let l = [false, false, true, true];
        assert_eq!(balanced_accuracy(&s, &l, 0.5).unwrap(), 1.0);
        // All-positive predictor: TPR=1, TNR=0.
        assert_eq!(balanced_accuracy(&s, &l, 0.0).unwrap(), 0.5);
    }

    #[test]
    fn balanced_accuracy_hand_counts() {
        // threshold 0.65: preds (-,-,+,+); TP=2 FN=0 TN=2 FP=0.
        let s = [0.2, 0.6, 0.7, 0.9];
        let l = [false, false, true, true];
        assert_eq!(balanced_accuracy(&s, &l, 0.65).unwrap(), 1.0);
        // threshold 0.65 with one positive below: TPR=1/2, TNR=1.
        let s = [0.2, 0.6, 0.7, 0.9];
        let l = [false, true, false, true];
        assert_eq!(balanced_accuracy(&s, &l, 0.65).unwrap(), 0.5);
        // Threshold equal to a score counts as positive.
        let s = [0.3, 0.5];
        let l = [false, true];
        assert_eq!(balanced_accuracy(&s, &l, 0.5).unwrap(), 1.0);
    }

    #[test]
    fn best_threshold_dominates_other_cuts() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..20 {
            let n = rng.random_range(4..60);
            let scores: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
            labels[0] = true;
            labels[1] = false;
            let (_, best) = best_threshold(&scores, &labels).unwrap();
            for &t in &scores {
                assert!(best >= balanced_accuracy(&scores, &labels, t).unwrap() - 1e-15);
            }
        }
    }
}
