//! Task metrics, per-client distribution summaries, manifold diagnostics and
//! representation similarity.

mod manifold;
mod similarity;

use crate::error::{Error, Result};
use crate::stats;

pub use manifold::{continuity, rank_matrix, trustworthiness};
pub use similarity::{cka, mean_cosine, procrustes};

fn check_pairs(preds: &[usize], labels: &[usize]) -> Result<()> {
    if preds.is_empty() {
        return Err(Error::Insufficient("metric over an empty prediction set".into()));
    }
    if preds.len() != labels.len() {
        return Err(Error::dim("predictions vs labels", labels.len(), preds.len()));
    }
    Ok(())
}

pub fn accuracy(preds: &[usize], labels: &[usize]) -> Result<f64> {
    check_pairs(preds, labels)?;
    Ok(preds.iter().zip(labels).filter(|(p, y)| p == y).count() as f64 / preds.len() as f64)
}

/// F1 from true positives, false positives and false negatives pooled over
/// the `n_classes` one-vs-rest problems.
pub fn micro_f1(preds: &[usize], labels: &[usize], n_classes: usize) -> Result<f64> {
    check_pairs(preds, labels)?;
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for c in 0..n_classes {
        for (&p, &y) in preds.iter().zip(labels) {
            match (p == c, y == c) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                _ => {}
            }
        }
    }
    let denom = 2 * tp + fp + fn_;
    Ok(if denom == 0 { 0.0 } else { 2.0 * tp as f64 / denom as f64 })
}

pub fn worst_client(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Insufficient("worst client of an empty set".into()));
    }
    Ok(values.iter().copied().fold(f64::INFINITY, f64::min))
}

/// 10th percentile with linear interpolation between order statistics.
pub fn percentile_10(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Insufficient("percentile of an empty set".into()));
    }
    Ok(stats::quantile(values, 0.10))
}

/// Candidate ids ordered by descending score, ties by ascending id.
pub fn rank_candidates(candidates: &[(usize, f64)]) -> Vec<usize> {
    let mut c = candidates.to_vec();
    c.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    c.into_iter().map(|(id, _)| id).collect()
}

/// Mean reciprocal rank and Hits@K of each query's true item in its ranked list.
pub fn mrr_hits(ranked_lists: &[Vec<usize>], true_items: &[usize], k: usize) -> Result<(f64, f64)> {
    if ranked_lists.is_empty() {
        return Err(Error::Insufficient("MRR over no queries".into()));
    }
    if ranked_lists.len() != true_items.len() {
        return Err(Error::dim("MRR true items", ranked_lists.len(), true_items.len()));
    }
    let mut rr = 0.0;
    let mut hits = 0usize;
    for (list, &t) in ranked_lists.iter().zip(true_items) {
        let rank = list
            .iter()
            .position(|&c| c == t)
            .ok_or_else(|| Error::invalid(format!("true item {t} is missing from its ranked list")))?
            + 1;
        rr += 1.0 / rank as f64;
        hits += (rank <= k) as usize;
    }
    let n = ranked_lists.len() as f64;
    Ok((rr / n, hits as f64 / n))
}
