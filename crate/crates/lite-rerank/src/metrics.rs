//! Re-ranking quality metrics: MRR@10 and nDCG@10.

use crate::error::{Error, Result};

/// Rank cutoff shared by both metrics.
pub const CUTOFF: usize = 10;

/// Stable descending sort of scores; returns the candidate indices in rank
/// order. Ties keep their input order.
pub fn rank_by_scores(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order
}

/// Mean reciprocal rank at 10 over ranked binary relevance lists: each query
/// contributes `1 / rank` of its first relevant document when that rank is
/// within the cutoff, otherwise 0.
pub fn mrr_at_10(rankings: &[Vec<bool>]) -> Result<f64> {
    if rankings.is_empty() {
        return Err(Error::InvalidArgument(
            "mrr needs at least one query".into(),
        ));
    }
    for (qi, r) in rankings.iter().enumerate() {
        if r.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "query {qi} has no candidates"
            )));
        }
    }
    let total: f64 = rankings
        .iter()
        .map(|r| {
            r.iter()
                .take(CUTOFF)
                .position(|&rel| rel)
                .map_or(0.0, |idx| 1.0 / (idx + 1) as f64)
        })
        .sum();
    Ok(total / rankings.len() as f64)
}

fn dcg(gains: impl Iterator<Item = u32>) -> f64 {
    gains
        .take(CUTOFF)
        .enumerate()
        .map(|(idx, rel)| {
            let gain = 2f64.powi(rel as i32) - 1.0;
            gain / ((idx + 2) as f64).log2()
        })
        .sum()
}

/// Normalized discounted cumulative gain at 10 over ranked graded-relevance
/// lists, gain `(2^rel - 1) / log2(rank + 1)`. The ideal ordering is the
/// descending sort of the same gains; queries whose ideal DCG is zero
/// contribute 0.
pub fn ndcg_at_10(rankings: &[Vec<u32>]) -> Result<f64> {
    if rankings.is_empty() {
        return Err(Error::InvalidArgument(
            "ndcg needs at least one query".into(),
        ));
    }
    let mut total = 0.0;
    for (qi, ranked) in rankings.iter().enumerate() {
        if ranked.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "query {qi} has no candidates"
            )));
        }
        let actual = dcg(ranked.iter().copied());
        let mut ideal_order = ranked.clone();
        ideal_order.sort_unstable_by(|a, b| b.cmp(a));
        let ideal = dcg(ideal_order.into_iter());
        if ideal > 0.0 {
            total += actual / ideal;
        }
    }
    Ok(total / rankings.len() as f64)
}
