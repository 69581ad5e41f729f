//! End-to-end pipeline: candidate re-ranking, head training, quality
//! evaluation, and the latency/FLOP bench harness.
//!
//! Query embeddings arrive in the same binary layout as the document index
//! (one record per query: id plus an f32 matrix), so any upstream encoder
//! can produce them. Re-ranking fans candidate scoring out over a worker
//! pool; results are merged back in candidate order before the stable sort,
//! so the output never depends on the worker count.

mod bench;
mod files;
mod train;

pub use bench::{bench, flat_lite_flops, knrm_flops, sep_lite_flops, BenchConfig, BenchReport};
pub use files::{
    read_candidates, read_qrels, read_run, read_train_records, write_run, RunLine, TrainRecord,
};
pub use train::{train_head, TrainConfig, TrainOutcome};

use rayon::prelude::*;
use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};
use crate::index::DocumentIndex;
use crate::metrics::{mrr_at_10, ndcg_at_10, CUTOFF};
use crate::scorers::{score_counted, DotCounter, HeadParams, ScorerKind};
use crate::tensor::Matrix;

/// One query with its candidate set.
#[derive(Debug, Clone)]
pub struct RerankRequest {
    pub query_id: u64,
    /// Token matrix `P x L1`, or the pooled vector as `P x 1` for the
    /// dual-encoder scorer. Callers must supply exactly the token count the
    /// scorer head was built for; short queries are not padded here.
    pub query: Matrix,
    pub candidates: Vec<u64>,
}

/// Scores every candidate and returns `(doc_id, score)` pairs in rank
/// order: descending score, stable on exact ties.
pub fn rerank(
    request: &RerankRequest,
    index: &DocumentIndex,
    kind: &ScorerKind,
    head: Option<&HeadParams>,
    counter: Option<&DotCounter>,
) -> Result<Vec<(u64, f64)>> {
    if request.candidates.is_empty() {
        return Err(Error::InvalidArgument(
            "rerank request has no candidates".into(),
        ));
    }
    let mut scored: Vec<(u64, f64)> = request
        .candidates
        .par_iter()
        .map(|&doc_id| {
            let doc = index.load_doc(doc_id)?;
            let s = score_counted(kind, &request.query, &doc, head, counter)?;
            Ok((doc_id, s))
        })
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| b.1.total_cmp(&a.1));
    Ok(scored)
}

/// Runs [`rerank`] for every `(query, candidates)` pair and emits run-file
/// lines with 1-based ranks.
pub fn rerank_to_run(
    queries: &HashMap<u64, Matrix>,
    candidates: &[(u64, Vec<u64>)],
    index: &DocumentIndex,
    kind: &ScorerKind,
    head: Option<&HeadParams>,
) -> Result<Vec<RunLine>> {
    let mut lines = Vec::new();
    for (query_id, cands) in candidates {
        let query = queries
            .get(query_id)
            .ok_or_else(|| Error::InvalidArgument(format!("query {query_id} has no embedding")))?;
        let request = RerankRequest {
            query_id: *query_id,
            query: query.clone(),
            candidates: cands.clone(),
        };
        let ranked = rerank(&request, index, kind, head, None)?;
        for (rank0, (doc_id, score)) in ranked.into_iter().enumerate() {
            lines.push(RunLine {
                query_id: *query_id,
                doc_id,
                rank: rank0 + 1,
                score,
            });
        }
    }
    Ok(lines)
}

/// Per-query and aggregate metric values for a run.
#[derive(Debug, Clone)]
pub struct EvalReport {
    /// `(query_id, reciprocal rank at 10, ndcg at 10)` in query order of
    /// first appearance in the run.
    pub per_query: Vec<(u64, f64, f64)>,
    pub mrr_at_10: f64,
    pub ndcg_at_10: f64,
}

/// Scores a run file against qrels. Every query in the run must have a
/// qrels entry; documents missing from the qrels count as irrelevant.
pub fn evaluate(run: &[RunLine], qrels: &HashMap<u64, HashMap<u64, u32>>) -> Result<EvalReport> {
    if run.is_empty() {
        return Err(Error::InvalidArgument("run file is empty".into()));
    }
    let mut order: Vec<u64> = Vec::new();
    let mut grouped: HashMap<u64, Vec<(usize, u64)>> = HashMap::new();
    for line in run {
        let entry = grouped.entry(line.query_id).or_default();
        if entry.is_empty() {
            order.push(line.query_id);
        }
        entry.push((line.rank, line.doc_id));
    }

    let missing: BTreeSet<u64> = order
        .iter()
        .copied()
        .filter(|qid| !qrels.contains_key(qid))
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingQrels(missing.into_iter().collect()));
    }

    let mut per_query = Vec::with_capacity(order.len());
    let mut all_flags = Vec::with_capacity(order.len());
    let mut all_rels = Vec::with_capacity(order.len());
    for qid in &order {
        let mut ranked = grouped.remove(qid).expect("grouped above");
        ranked.sort_by_key(|&(rank, _)| rank);
        let rels: Vec<u32> = ranked
            .iter()
            .map(|&(_, doc)| qrels[qid].get(&doc).copied().unwrap_or(0))
            .collect();
        let flags: Vec<bool> = rels.iter().map(|&r| r > 0).collect();
        let rr = flags
            .iter()
            .take(CUTOFF)
            .position(|&f| f)
            .map_or(0.0, |idx| 1.0 / (idx + 1) as f64);
        let ndcg = ndcg_at_10(std::slice::from_ref(&rels))?;
        per_query.push((*qid, rr, ndcg));
        all_flags.push(flags);
        all_rels.push(rels);
    }

    Ok(EvalReport {
        per_query,
        mrr_at_10: mrr_at_10(&all_flags)?,
        ndcg_at_10: ndcg_at_10(&all_rels)?,
    })
}

/// Loads every record of an embeddings file (index layout) into a map.
pub fn load_embeddings(path: impl AsRef<std::path::Path>) -> Result<HashMap<u64, Matrix>> {
    let idx = DocumentIndex::open(path)?;
    Ok(idx.load_all()?.into_iter().collect())
}
