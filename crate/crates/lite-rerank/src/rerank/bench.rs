//! Latency and operation-count harness.
//!
//! Wall-clock numbers are reported, never asserted: they are hardware
//! bound. Dot-product counts come from the instrumented scorer counter and
//! must equal the analytic values (`K` for the dual encoder, `K * L1 * L2'`
//! for everything that builds the similarity matrix). Head FLOP counts are
//! analytic, counting a fused multiply-add as two operations:
//!
//! * separable head:
//!   `2 (m2 L2' + L2' m2) L1 + 2 (m1 L1 + L1 m1) L2' + 2 L1 L2'`
//!   for the four shared layers and the final projection, plus linear
//!   layer-norm/ReLU terms at 5 and 1 operations per element.
//! * flattened head: `2 m n + 3 m` (matrix-vector, ReLU, output dot).
//! * kernel pooling: 4 operations per matrix entry per kernel plus a log
//!   per row per kernel; the final combination adds `2 K`.
//!
//! Sum-max and the dual-encoder baseline run no head, so their head FLOP
//! count is zero.

use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::index::DocumentIndex;
use crate::nn::{FlatLiteParams, SepLiteParams};
use crate::scorers::{DotCounter, HeadParams, KnrmParams, ScorerKind};
use crate::tensor::Matrix;

use super::{rerank, RerankRequest};

#[derive(Debug, Clone)]
pub struct BenchConfig {
    /// Number of distinct random queries per scorer.
    pub num_queries: usize,
    /// Timed repetitions; one extra warmup repetition is discarded.
    pub reps: usize,
    /// Query token count.
    pub l1: usize,
    pub seed: u64,
    /// Separable head widths used when that scorer is benched.
    pub m1: usize,
    pub m2: usize,
    /// Flattened head width.
    pub hidden: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            num_queries: 4,
            reps: 3,
            l1: 30,
            seed: 0,
            m1: 8,
            m2: 16,
            hidden: 32,
        }
    }
}

/// Measured and analytic figures for one scorer over one index.
#[derive(Debug, Clone)]
pub struct BenchReport {
    pub scorer: String,
    /// Median wall-clock time to score all `K` candidates for one query.
    pub median_ms_per_query: f64,
    /// Instrumented dot products per query.
    pub dot_products_per_query: u64,
    /// Analytic expectation: `K` for the dual encoder, `K * L1 * L2'`
    /// otherwise.
    pub analytic_dot_products: u64,
    /// Analytic head FLOPs per scored document.
    pub head_flops_per_doc: u64,
    /// Embedding payload bytes of the index served.
    pub index_payload_bytes: u64,
}

/// Separable-head FLOPs for one similarity matrix.
pub fn sep_lite_flops(l1: usize, l2: usize, m1: usize, m2: usize) -> u64 {
    let (l1, l2, m1, m2) = (l1 as u64, l2 as u64, m1 as u64, m2 as u64);
    let matmuls = 2 * (m2 * l2 + l2 * m2) * l1 + 2 * (m1 * l1 + l1 * m1) * l2 + 2 * l1 * l2;
    // Layer norm at 5 ops/element, ReLU at 1, per stage output.
    let ln_relu = l1 * (6 * m2 + 6 * l2) + l2 * (6 * m1 + 6 * l1);
    matmuls + ln_relu
}

/// Flattened-head FLOPs for one similarity matrix of `n` entries.
pub fn flat_lite_flops(hidden: usize, n: usize) -> u64 {
    let (m, n) = (hidden as u64, n as u64);
    2 * m * n + 3 * m
}

/// Kernel-pooling FLOPs for one `L1 x L2` similarity matrix with `k`
/// kernels.
pub fn knrm_flops(l1: usize, l2: usize, k: usize) -> u64 {
    let (l1, l2, k) = (l1 as u64, l2 as u64, k as u64);
    4 * l1 * l2 * k + l1 * k + 2 * k
}

fn head_for(kind: &ScorerKind, l1: usize, l2: usize, cfg: &BenchConfig) -> Option<HeadParams> {
    match kind {
        ScorerKind::Knrm => Some(HeadParams::Knrm(KnrmParams::init(cfg.seed))),
        ScorerKind::FlatLite => Some(HeadParams::Flat(FlatLiteParams::init(
            cfg.hidden,
            l1 * l2,
            cfg.seed,
        ))),
        ScorerKind::SepLite => Some(HeadParams::Sep(SepLiteParams::init(
            l1, l2, cfg.m1, cfg.m2, cfg.seed,
        ))),
        _ => None,
    }
}

fn analytic_flops(kind: &ScorerKind, l1: usize, l2: usize, cfg: &BenchConfig) -> u64 {
    match kind {
        ScorerKind::SepLite => sep_lite_flops(l1, l2, cfg.m1, cfg.m2),
        ScorerKind::FlatLite => flat_lite_flops(cfg.hidden, l1 * l2),
        ScorerKind::Knrm => knrm_flops(l1, l2, KnrmParams::default_config().kernels()),
        _ => 0,
    }
}

/// Benches each scorer over every document in the index, using seeded
/// random queries.
pub fn bench(
    index: &DocumentIndex,
    kinds: &[ScorerKind],
    cfg: &BenchConfig,
) -> Result<Vec<BenchReport>> {
    let header = *index.header();
    let p = header.token_dim as usize;
    let l2 = header.tokens_per_doc as usize;
    let candidates: Vec<u64> = index.doc_ids().collect();
    let k = candidates.len() as u64;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let queries: Vec<Matrix> = (0..cfg.num_queries.max(1))
        .map(|_| {
            Matrix::new(
                p,
                cfg.l1,
                (0..p * cfg.l1).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            )
            .expect("bench query dims are positive")
        })
        .collect();

    let mut reports = Vec::with_capacity(kinds.len());
    for kind in kinds {
        let head = head_for(kind, cfg.l1, l2, cfg);
        let requests: Vec<RerankRequest> = queries
            .iter()
            .enumerate()
            .map(|(qi, q)| RerankRequest {
                query_id: qi as u64,
                query: q.clone(),
                candidates: candidates.clone(),
            })
            .collect();

        // Instrumented count over exactly one query.
        let counter = DotCounter::new();
        rerank(&requests[0], index, kind, head.as_ref(), Some(&counter))?;
        let dots_per_query = counter.count();

        // Warmup plus timed repetitions; the median rep is reported.
        let mut per_rep_ms = Vec::with_capacity(cfg.reps);
        for rep in 0..=cfg.reps {
            let start = Instant::now();
            for request in &requests {
                rerank(request, index, kind, head.as_ref(), None)?;
            }
            let elapsed = start.elapsed().as_secs_f64() * 1e3 / requests.len() as f64;
            if rep > 0 {
                per_rep_ms.push(elapsed);
            }
        }
        per_rep_ms.sort_by(f64::total_cmp);
        let median_ms_per_query = per_rep_ms[per_rep_ms.len() / 2];

        let analytic = if matches!(kind, ScorerKind::De) {
            k
        } else {
            k * cfg.l1 as u64 * l2 as u64
        };
        reports.push(BenchReport {
            scorer: kind.to_string(),
            median_ms_per_query,
            dot_products_per_query: dots_per_query,
            analytic_dot_products: analytic,
            head_flops_per_doc: analytic_flops(kind, cfg.l1, l2, cfg),
            index_payload_bytes: header.payload_bytes(),
        });
    }
    Ok(reports)
}
