//! Rank-based attack-strength metrics: fooling rate, OLNR, NLOR, fooling
//! rate at rank k, and per-layer feature-similarity statistics.
//!
//! Everything here is a pure function over immutable inputs; ranks are
//! 1-based over descending confidence, with ties broken toward the lower
//! class index.

use alloc::vec::Vec;

use num_traits::Float;
use thiserror::Error;

use crate::models::ActivationTrace;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("metric over an empty pair list")]
    EmptyPairs,
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("rank k = {k} out of range 1..={classes}")]
    KOutOfRange { k: usize, classes: usize },
    #[error("olnr/nlor are defined for fooled pairs only")]
    NotFooled,
    #[error("traces disagree: {0}")]
    TraceMismatch(&'static str),
    #[error("per-image similarity rows have inconsistent layers")]
    InconsistentSimilarityRows,
}

/// Softmax outputs of the same classifier on a clean image and on its
/// adversary.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionPair {
    pub clean_probs: Vec<f64>,
    pub adv_probs: Vec<f64>,
}

impl PredictionPair {
    pub fn new(clean_probs: Vec<f64>, adv_probs: Vec<f64>) -> Self {
        debug_assert_eq!(clean_probs.len(), adv_probs.len());
        debug_assert!(probably_probabilities(&clean_probs));
        debug_assert!(probably_probabilities(&adv_probs));
        PredictionPair {
            clean_probs,
            adv_probs,
        }
    }

    pub fn clean_pred(&self) -> usize {
        argmax(&self.clean_probs)
    }

    pub fn adv_pred(&self) -> usize {
        argmax(&self.adv_probs)
    }

    /// Fooled = the top-1 prediction changed.
    pub fn is_fooled(&self) -> bool {
        self.clean_pred() != self.adv_pred()
    }
}

fn probably_probabilities(v: &[f64]) -> bool {
    let sum: f64 = v.iter().sum();
    v.iter().all(|&p| p >= 0.0) && (sum - 1.0).abs() < 1e-5
}

/// Index of the maximum, ties to the lower index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Index of the minimum, ties to the lower index (the least-likely-class
/// rule).
pub fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v < values[best] {
            best = i;
        }
    }
    best
}

/// 1-based position of `label` once the confidences are sorted descending;
/// tied entries rank in class-index order.
pub fn rank_of(probs: &[f64], label: usize) -> Result<usize, MetricsError> {
    if label >= probs.len() {
        return Err(MetricsError::LabelOutOfRange {
            label,
            classes: probs.len(),
        });
    }
    let p = probs[label];
    let ahead = probs
        .iter()
        .enumerate()
        .filter(|&(i, &q)| q > p || (q == p && i < label))
        .count();
    Ok(ahead + 1)
}

/// Old Label's New Rank: where the clean prediction lands in the adversarial
/// ordering.
pub fn olnr(pair: &PredictionPair) -> Result<usize, MetricsError> {
    if !pair.is_fooled() {
        return Err(MetricsError::NotFooled);
    }
    rank_of(&pair.adv_probs, pair.clean_pred())
}

/// New Label's Old Rank: where the adversarial prediction ranked in the
/// clean ordering.
pub fn nlor(pair: &PredictionPair) -> Result<usize, MetricsError> {
    if !pair.is_fooled() {
        return Err(MetricsError::NotFooled);
    }
    rank_of(&pair.clean_probs, pair.adv_pred())
}

/// Percentage of pairs whose top-1 prediction changed.
pub fn fooling_rate(pairs: &[PredictionPair]) -> Result<f64, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyPairs);
    }
    let fooled = pairs.iter().filter(|p| p.is_fooled()).count();
    Ok(100.0 * fooled as f64 / pairs.len() as f64)
}

/// Percentage of pairs whose clean prediction is absent from the adversarial
/// top-k (so fr@1 equals the fooling rate and fr@C is always zero).
pub fn fooling_rate_at_k(pairs: &[PredictionPair], k: usize) -> Result<f64, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyPairs);
    }
    let classes = pairs[0].clean_probs.len();
    if k == 0 || k > classes {
        return Err(MetricsError::KOutOfRange { k, classes });
    }
    let mut out_of_topk = 0usize;
    for pair in pairs {
        if rank_of(&pair.adv_probs, pair.clean_pred())? > k {
            out_of_topk += 1;
        }
    }
    Ok(100.0 * out_of_topk as f64 / pairs.len() as f64)
}

/// Cosine and normalized-L2 similarity between two same-layer activations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSimilarity {
    pub layer_id: usize,
    pub cosine: f64,
    pub normalized_l2: f64,
}

/// Flattens each hooked layer of both traces and reports per-layer
/// cosine = <a,b>/(|a||b| + 1e-12) and normalized L2 = |a-b|/(|a| + 1e-12).
pub fn feature_similarity<T: Scalar>(
    clean_trace: &ActivationTrace<T>,
    adv_trace: &ActivationTrace<T>,
) -> Result<Vec<LayerSimilarity>, MetricsError> {
    if clean_trace.entries.len() != adv_trace.entries.len() {
        return Err(MetricsError::TraceMismatch("entry counts differ"));
    }
    clean_trace
        .entries
        .iter()
        .zip(&adv_trace.entries)
        .map(|(c, a)| {
            if c.layer_id != a.layer_id {
                return Err(MetricsError::TraceMismatch("layer ids differ"));
            }
            if c.activation.len() != a.activation.len() {
                return Err(MetricsError::TraceMismatch("activation sizes differ"));
            }
            let mut dot = 0.0f64;
            let mut na = 0.0f64;
            let mut nb = 0.0f64;
            let mut diff = 0.0f64;
            for (&x, &y) in c.activation.data().iter().zip(a.activation.data()) {
                let (x, y) = (x.as_f64(), y.as_f64());
                dot += x * y;
                na += x * x;
                nb += y * y;
                diff += (x - y) * (x - y);
            }
            let (na, nb, diff) = (Float::sqrt(na), Float::sqrt(nb), Float::sqrt(diff));
            Ok(LayerSimilarity {
                layer_id: c.layer_id,
                cosine: dot / (na * nb + 1e-12),
                normalized_l2: diff / (na + 1e-12),
            })
        })
        .collect()
}

/// Everything the comparison tables need about one attack run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub fooling_rate: f64,
    pub n_fooled: usize,
    /// Mean OLNR over fooled pairs; absent when nothing was fooled.
    pub mean_olnr: Option<f64>,
    /// Mean NLOR over fooled pairs; absent when nothing was fooled.
    pub mean_nlor: Option<f64>,
    /// (k, fooling rate at rank k) for k = 1..=C.
    pub fr_at_k: Vec<(usize, f64)>,
    /// Per-layer mean similarity between clean and adversarial features.
    pub feature_similarity: Option<Vec<LayerSimilarity>>,
}

/// Aggregates prediction pairs (and optionally per-image similarity rows
/// from [`feature_similarity`]) into a [`MetricsReport`].
pub fn aggregate(
    pairs: &[PredictionPair],
    similarity_rows: Option<&[Vec<LayerSimilarity>]>,
) -> Result<MetricsReport, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyPairs);
    }
    let classes = pairs[0].clean_probs.len();
    let mut olnr_sum = 0usize;
    let mut nlor_sum = 0usize;
    let mut n_fooled = 0usize;
    for pair in pairs {
        if pair.is_fooled() {
            n_fooled += 1;
            olnr_sum += olnr(pair)?;
            nlor_sum += nlor(pair)?;
        }
    }
    let fr_at_k = (1..=classes)
        .map(|k| fooling_rate_at_k(pairs, k).map(|v| (k, v)))
        .collect::<Result<Vec<_>, _>>()?;
    let feature_similarity = similarity_rows.map(mean_similarity).transpose()?;
    Ok(MetricsReport {
        fooling_rate: fooling_rate(pairs)?,
        n_fooled,
        mean_olnr: (n_fooled > 0).then(|| olnr_sum as f64 / n_fooled as f64),
        mean_nlor: (n_fooled > 0).then(|| nlor_sum as f64 / n_fooled as f64),
        fr_at_k,
        feature_similarity,
    })
}

fn mean_similarity(rows: &[Vec<LayerSimilarity>]) -> Result<Vec<LayerSimilarity>, MetricsError> {
    let Some(first) = rows.first() else {
        return Ok(Vec::new());
    };
    let mut means: Vec<LayerSimilarity> = first
        .iter()
        .map(|s| LayerSimilarity {
            layer_id: s.layer_id,
            cosine: 0.0,
            normalized_l2: 0.0,
        })
        .collect();
    for row in rows {
        if row.len() != means.len() {
            return Err(MetricsError::InconsistentSimilarityRows);
        }
        for (mean, s) in means.iter_mut().zip(row) {
            if mean.layer_id != s.layer_id {
                return Err(MetricsError::InconsistentSimilarityRows);
            }
            mean.cosine += s.cosine;
            mean.normalized_l2 += s.normalized_l2;
        }
    }
    let n = rows.len() as f64;
    for mean in &mut means {
        mean.cosine /= n;
        mean.normalized_l2 /= n;
    }
    Ok(means)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(clean: &[f64], adv: &[f64]) -> PredictionPair {
        PredictionPair::new(clean.to_vec(), adv.to_vec())
    }

    #[test]
    fn rank_of_basic() {
        let probs = [0.1, 0.7, 0.2];
        assert_eq!(rank_of(&probs, 1).unwrap(), 1);
        assert_eq!(rank_of(&probs, 2).unwrap(), 2);
        assert_eq!(rank_of(&probs, 0).unwrap(), 3);
    }

    #[test]
    fn rank_of_uniform_breaks_ties_by_index() {
        let probs = [0.25; 4];
        assert_eq!(rank_of(&probs, 0).unwrap(), 1);
        assert_eq!(rank_of(&probs, 2).unwrap(), 3);
    }

    #[test]
    fn rank_of_rejects_bad_label() {
        assert!(matches!(
            rank_of(&[0.5, 0.5], 2),
            Err(MetricsError::LabelOutOfRange {
                label: 2,
                classes: 2
            })
        ));
    }

    #[test]
    fn olnr_and_nlor_on_a_fooled_pair() {
        // clean: class 0 on top, class 2 ranked 3rd; adv: class 2 on top,
        // class 0 pushed to rank 2.
        let p = pair(&[0.5, 0.3, 0.2], &[0.3, 0.2, 0.5]);
        assert!(p.is_fooled());
        assert_eq!(olnr(&p).unwrap(), 2);
        assert_eq!(nlor(&p).unwrap(), 3);
    }

    #[test]
    fn olnr_rejects_unfooled_pair() {
        let p = pair(&[0.9, 0.1], &[0.8, 0.2]);
        assert!(matches!(olnr(&p), Err(MetricsError::NotFooled)));
        assert!(matches!(nlor(&p), Err(MetricsError::NotFooled)));
    }

    #[test]
    fn fooling_rate_counts_flips() {
        let flipped = pair(&[0.9, 0.1], &[0.1, 0.9]);
        let kept = pair(&[0.9, 0.1], &[0.8, 0.2]);
        let mut pairs = alloc::vec![flipped; 8];
        pairs.extend(alloc::vec![kept; 2]);
        assert_eq!(fooling_rate(&pairs).unwrap(), 80.0);
    }

    #[test]
    fn fooling_rate_zero_when_probs_identical() {
        let p = pair(&[0.6, 0.4], &[0.6, 0.4]);
        assert_eq!(fooling_rate(&[p]).unwrap(), 0.0);
    }

    #[test]
    fn fooling_rate_rejects_empty() {
        assert!(matches!(fooling_rate(&[]), Err(MetricsError::EmptyPairs)));
    }

    #[test]
    fn fr_at_full_k_is_zero_and_fr_at_1_is_fooling_rate() {
        let pairs = [
            pair(&[0.5, 0.3, 0.2], &[0.2, 0.3, 0.5]),
            pair(&[0.5, 0.3, 0.2], &[0.5, 0.3, 0.2]),
        ];
        assert_eq!(fooling_rate_at_k(&pairs, 3).unwrap(), 0.0);
        assert_eq!(
            fooling_rate_at_k(&pairs, 1).unwrap(),
            fooling_rate(&pairs).unwrap()
        );
    }

    #[test]
    fn fr_at_k_rejects_out_of_range() {
        let pairs = [pair(&[0.5, 0.5], &[0.5, 0.5])];
        assert!(matches!(
            fooling_rate_at_k(&pairs, 0),
            Err(MetricsError::KOutOfRange { .. })
        ));
        assert!(matches!(
            fooling_rate_at_k(&pairs, 3),
            Err(MetricsError::KOutOfRange { .. })
        ));
    }

    #[test]
    fn aggregate_means_over_fooled_only() {
        // Two fooled pairs with OLNR 2 and 4; one unfooled pair.
        let p1 = pair(&[0.5, 0.3, 0.1, 0.1], &[0.3, 0.5, 0.1, 0.1]); // olnr 2
        let p2 = pair(&[0.5, 0.3, 0.1, 0.1], &[0.05, 0.5, 0.3, 0.15]); // olnr 4
        let p3 = pair(&[0.5, 0.3, 0.1, 0.1], &[0.5, 0.3, 0.1, 0.1]);
        let report = aggregate(&[p1, p2, p3], None).unwrap();
        assert_eq!(report.n_fooled, 2);
        assert_eq!(report.mean_olnr, Some(3.0));
        assert_eq!(report.fr_at_k[0].0, 1);
        assert_eq!(report.fr_at_k.len(), 4);
        assert_eq!(report.fr_at_k[0].1, report.fooling_rate);
    }

    #[test]
    fn aggregate_with_zero_fooled_reports_absent_means() {
        let p = pair(&[0.9, 0.1], &[0.9, 0.1]);
        let report = aggregate(&[p], None).unwrap();
        assert_eq!(report.fooling_rate, 0.0);
        assert_eq!(report.n_fooled, 0);
        assert_eq!(report.mean_olnr, None);
        assert_eq!(report.mean_nlor, None);
    }
}
