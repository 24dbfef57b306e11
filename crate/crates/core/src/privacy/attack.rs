//! Loss-threshold membership inference.

use crate::error::{Error, Result};

/// Area under the ROC curve for separating positives (higher score) from
/// negatives, by the rank statistic with ties counted half.
pub fn auroc(positive_scores: &[f64], negative_scores: &[f64]) -> Result<f64> {
    if positive_scores.is_empty() || negative_scores.is_empty() {
        return Err(Error::Insufficient("AUROC needs both classes".into()));
    }
    if positive_scores.iter().chain(negative_scores).any(|x| x.is_nan()) {
        return Err(Error::invalid("AUROC scores must not be NaN"));
    }
    let mut all: Vec<(f64, bool)> = positive_scores
        .iter()
        .map(|&s| (s, true))
        .chain(negative_scores.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    // average ranks over tie groups
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum_pos += avg_rank * all[i..=j].iter().filter(|x| x.1).count() as f64;
        i = j + 1;
    }
    let (np, nn) = (positive_scores.len() as f64, negative_scores.len() as f64);
    Ok((rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn))
}

/// Members are predicted by low loss: AUROC of the score `-loss`.
pub fn mi_attack(member_losses: &[f64], nonmember_losses: &[f64]) -> Result<f64> {
    let neg = |v: &[f64]| v.iter().map(|x| -x).collect::<Vec<_>>();
    auroc(&neg(member_losses), &neg(nonmember_losses))
}
