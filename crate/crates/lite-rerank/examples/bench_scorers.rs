//! Latency and operation accounting across scorers, over two index
//! configurations (full and reduced token counts).
//!
//! ```bash
//! cargo run --release --example bench_scorers
//! ```

use lite_rerank::index::{build_index, DocumentIndex, Reduction};
use lite_rerank::rerank::{bench, BenchConfig};
use lite_rerank::scorers::ScorerKind;
use lite_rerank::Matrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let dir = std::env::temp_dir().join("lite-rerank-bench-example");
    std::fs::create_dir_all(&dir).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let p = 64usize;
    let l2 = 200usize;
    let n_docs = 100u64;
    let docs: Vec<(u64, Matrix)> = (0..n_docs)
        .map(|i| {
            let data = (0..p * l2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            (i, Matrix::new(p, l2, data).unwrap())
        })
        .collect();

    let kinds = [
        ScorerKind::De,
        ScorerKind::Colbert,
        ScorerKind::ColbertTopK(4),
        ScorerKind::Knrm,
        ScorerKind::FlatLite,
        ScorerKind::SepLite,
    ];

    for (label, reduction) in [
        ("full: 200 tokens", Reduction::None),
        ("reduced: 50 tokens", Reduction::AvgPool { factor: 4 }),
    ] {
        let path = dir.join("bench.idx");
        build_index(docs.clone(), &reduction, &path).unwrap();
        let index = DocumentIndex::open(&path).unwrap();
        let cfg = BenchConfig {
            num_queries: 4,
            reps: 3,
            l1: 30,
            seed: 0,
            m1: 32,
            m2: 64,
            hidden: 64,
        };
        let reports = bench(&index, &kinds, &cfg).unwrap();

        println!(
            "\n{label} ({} payload bytes)",
            index.header().payload_bytes()
        );
        println!(
            "{:<11} {:>10} {:>14} {:>15} {:>16}",
            "scorer", "ms/query", "dots/query", "analytic dots", "head flops/doc"
        );
        for r in &reports {
            assert_eq!(r.dot_products_per_query, r.analytic_dot_products);
            println!(
                "{:<11} {:>10.3} {:>14} {:>15} {:>16}",
                r.scorer,
                r.median_ms_per_query,
                r.dot_products_per_query,
                r.analytic_dot_products,
                r.head_flops_per_doc
            );
        }
    }

    println!("\nInstrumented dot counts matched the analytic formulas for every scorer.");
    std::fs::remove_dir_all(&dir).ok();
}
