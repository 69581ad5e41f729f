//! Full pipeline on synthetic embeddings: build an index, re-rank
//! candidates under several scorers, and evaluate against relevance
//! judgments.
//!
//! ```bash
//! cargo run --release --example rerank_end_to_end
//! ```

use std::collections::HashMap;

use lite_rerank::index::{build_index, DocumentIndex, Reduction};
use lite_rerank::rerank::{evaluate, rerank, RerankRequest, RunLine};
use lite_rerank::scorers::{HeadParams, KnrmParams, ScorerKind};
use lite_rerank::Matrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn normalize_columns(m: &mut Matrix) {
    for j in 0..m.cols() {
        let norm: f64 = (0..m.rows())
            .map(|i| m.get(i, j) * m.get(i, j))
            .sum::<f64>()
            .sqrt();
        if norm > 0.0 {
            for i in 0..m.rows() {
                m.set(i, j, m.get(i, j) / norm);
            }
        }
    }
}

fn main() {
    let dir = std::env::temp_dir().join("lite-rerank-e2e-example");
    std::fs::create_dir_all(&dir).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);

    let p = 16usize;
    let l1 = 8usize;
    let l2 = 24usize;
    let n_docs = 50u64;

    // Token columns are unit-normalized so every similarity is a cosine in
    // [-1, 1]; the kernel scorer's means live on that grid.
    fn random_tokens(p: usize, l: usize, rng: &mut ChaCha8Rng) -> Matrix {
        let mut m =
            Matrix::new(p, l, (0..p * l).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        normalize_columns(&mut m);
        m
    }

    // Synthetic corpus: each query has one "relevant" document built by
    // perturbing the query's tokens, so a good scorer should surface it.
    let n_queries = 5u64;
    let queries: HashMap<u64, Matrix> = (0..n_queries)
        .map(|qid| (qid, random_tokens(p, l1, &mut rng)))
        .collect();

    let mut docs: Vec<(u64, Matrix)> = Vec::new();
    let mut qrels: HashMap<u64, HashMap<u64, u32>> = HashMap::new();
    for qid in 0..n_queries {
        // Relevant document: query tokens embedded among random ones.
        let q = &queries[&qid];
        let mut d = random_tokens(p, l2, &mut rng);
        for t in 0..l1 {
            for r in 0..p {
                let noise: f64 = rng.gen_range(-0.02..0.02);
                d.set(r, t * 2, q.get(r, t) + noise);
            }
        }
        normalize_columns(&mut d);
        let doc_id = qid;
        docs.push((doc_id, d));
        qrels.entry(qid).or_default().insert(doc_id, 1);
    }
    for i in n_queries..n_docs {
        docs.push((i, random_tokens(p, l2, &mut rng)));
    }

    let path = dir.join("corpus.idx");
    build_index(docs, &Reduction::None, &path).unwrap();
    let index = DocumentIndex::open(&path).unwrap();
    println!(
        "indexed {} docs ({} payload bytes)\n",
        index.header().doc_count,
        index.header().payload_bytes()
    );

    // A hand-weighted kernel head: reward high-similarity kernels, ignore
    // the rest. (In practice this weight vector is trained.)
    let mut knrm_params = KnrmParams::default_config();
    knrm_params.w = vec![1.0, 0.3, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 2.0];
    let knrm = HeadParams::Knrm(knrm_params);
    for (kind, head) in [
        (ScorerKind::De, None),
        (ScorerKind::Colbert, None),
        (ScorerKind::ColbertTopK(2), None),
        (ScorerKind::Knrm, Some(&knrm)),
    ] {
        let mut run: Vec<RunLine> = Vec::new();
        for qid in 0..n_queries {
            let request = RerankRequest {
                query_id: qid,
                query: queries[&qid].clone(),
                candidates: (0..n_docs).collect(),
            };
            let ranked = rerank(&request, &index, &kind, head, None).unwrap();
            for (rank0, (doc_id, score)) in ranked.into_iter().enumerate() {
                run.push(RunLine {
                    query_id: qid,
                    doc_id,
                    rank: rank0 + 1,
                    score,
                });
            }
        }
        let report = evaluate(&run, &qrels).unwrap();
        println!(
            "{:<10} MRR@10 {:.4}  nDCG@10 {:.4}",
            kind.to_string(),
            report.mrr_at_10,
            report.ndcg_at_10
        );
    }

    std::fs::remove_dir_all(&dir).ok();
    println!("\nDone.");
}
