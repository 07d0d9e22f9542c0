//! Evaluation metrics for scores and probabilities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub n: usize,
    pub classification_error: Option<f64>,
    pub auc: Option<f64>,
    pub logloss: Option<f64>,
    pub mse: Option<f64>,
}

impl MetricSet {
    /// Error, AUC and log-loss from probabilities; AUC is `None` for single-class labels.
    pub fn classification(probs: &[f64], labels: &[f64]) -> Result<MetricSet> {
        let auc = match auc(probs, labels) {
            Ok(a) => Some(a),
            Err(Error::UndefinedMetric(_)) => None,
            Err(e) => return Err(e),
        };
        Ok(MetricSet {
            n: probs.len(),
            classification_error: Some(classification_error(probs, labels, 0.5)?),
            auc,
            logloss: Some(logloss(probs, labels)?),
            mse: None,
        })
    }

    pub fn regression(pred: &[f64], target: &[f64]) -> Result<MetricSet> {
        Ok(MetricSet {
            n: pred.len(),
            classification_error: None,
            auc: None,
            logloss: None,
            mse: Some(mse(pred, target)?),
        })
    }
}

fn check(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::EmptyData("metric input is empty".into()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("metric input".into()));
    }
    Ok(())
}

fn check_labels(labels: &[f64]) -> Result<()> {
    if labels.iter().any(|&y| y != 0.0 && y != 1.0) {
        return Err(Error::Malformed("labels must be 0 or 1".into()));
    }
    Ok(())
}

/// Fraction misclassified; `prob >= threshold` predicts class 1.
pub fn classification_error(probs: &[f64], labels: &[f64], threshold: f64) -> Result<f64> {
    check(probs, labels)?;
    check_labels(labels)?;
    let wrong = probs
        .iter()
        .zip(labels)
        .filter(|(&p, &y)| (p >= threshold) != (y == 1.0))
        .count();
    Ok(wrong as f64 / probs.len() as f64)
}

/// Area under the ROC curve via the rank-sum statistic with midranks.
///
/// Ranks are kept doubled so the statistic is an exact integer count of
/// (positive, negative) pairs with ties counted one half.
pub fn auc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    check(scores, labels)?;
    check_labels(labels)?;
    let n_pos = labels.iter().filter(|&&y| y == 1.0).count() as u128;
    let n_neg = labels.len() as u128 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric("AUC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // sum over positives of 2 * midrank (1-based)
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let twice_mid = (i + 1 + j + 1) as u128;
        let pos = order[i..=j].iter().filter(|&&k| labels[k] == 1.0).count() as u128;
        twice_rank_sum += pos * twice_mid;
        i = j + 1;
    }
    // 2U = 2R - n_pos (n_pos + 1)
    let twice_u = twice_rank_sum - n_pos * (n_pos + 1);
    Ok(twice_u as f64 / (2 * n_pos * n_neg) as f64)
}

/// Mean Bernoulli negative log-likelihood; probabilities are clipped to `[1e-15, 1 − 1e-15]`.
pub fn logloss(probs: &[f64], labels: &[f64]) -> Result<f64> {
    check(probs, labels)?;
    check_labels(labels)?;
    let total: f64 = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(1e-15, 1.0 - 1e-15);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    Ok(total / probs.len() as f64)
}

pub fn mse(pred: &[f64], target: &[f64]) -> Result<f64> {
    check(pred, target)?;
    Ok(pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_auc(s: &[f64], y: &[f64]) -> f64 {
        let mut num = 0u64;
        let mut den = 0u64;
        for i in 0..s.len() {
            for j in 0..s.len() {
                if y[i] == 1.0 && y[j] == 0.0 {
                    den += 2;
                    num += match s[i].partial_cmp(&s[j]).unwrap() {
                        std::cmp::Ordering::Greater => 2,
                        std::cmp::Ordering::Equal => 1,
                        std::cmp::Ordering::Less => 0,
                    };
                }
            }
        }
        num as f64 / den as f64
    }

    #[test]
    fn error_examples() {
        assert_eq!(classification_error(&[0.9, 0.1], &[1.0, 0.0], 0.5).unwrap(), 0.0);
        let e = classification_error(&[0.5; 4], &[1.0, 0.0, 0.0, 1.0], 0.5).unwrap();
        assert_eq!(e, 0.5);
        let e = classification_error(&[0.5; 4], &[0.0, 0.0, 0.0, 1.0], 0.5).unwrap();
        assert_eq!(e, 0.75);
        assert!(classification_error(&[], &[], 0.5).is_err());
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.9, 0.8, 0.7, 0.2], &[1.0, 0.0, 1.0, 0.0]).unwrap(), 0.75);
        assert_eq!(auc(&[0.3, 0.9], &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(auc(&[0.4; 6], &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0]).unwrap(), 0.5);
        assert!(matches!(auc(&[0.1, 0.2], &[1.0, 1.0]), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn logloss_and_mse() {
        assert!((logloss(&[0.5, 0.5], &[1.0, 0.0]).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 4.0]).unwrap(), 2.0);
    }

    proptest! {
        #[test]
        fn auc_equals_pair_counting(
            data in prop::collection::vec((0u8..12, prop::bool::ANY), 2..200)
        ) {
            let s: Vec<f64> = data.iter().map(|(v, _)| *v as f64 / 4.0).collect();
            let y: Vec<f64> = data.iter().map(|(_, b)| if *b { 1.0 } else { 0.0 }).collect();
            match auc(&s, &y) {
                Ok(a) => prop_assert_eq!(a, brute_auc(&s, &y)),
                Err(_) => prop_assert!(y.iter().all(|&v| v == y[0])),
            }
        }

        #[test]
        fn auc_is_rank_invariant(
            data in prop::collection::vec((-5.0f64..5.0, prop::bool::ANY), 2..100)
        ) {
            let s: Vec<f64> = data.iter().map(|(v, _)| *v).collect();
            let y: Vec<f64> = data.iter().map(|(_, b)| if *b { 1.0 } else { 0.0 }).collect();
            prop_assume!(y.iter().any(|&v| v == 1.0) && y.iter().any(|&v| v == 0.0));
            let t: Vec<f64> = s.iter().map(|v| v.exp() * 3.0 + 1.0).collect();
            prop_assert_eq!(auc(&s, &y).unwrap(), auc(&t, &y).unwrap());
        }
    }
}
