//! The expressivity contrast, end to end: no rank-3 dual encoder can score
//! the binary trace task below mean squared error 1/16, while a small
//! flattened head trained from scratch gets within noise of zero.
//!
//! ```bash
//! cargo run --release --example train_flat_trace
//! ```

use std::collections::HashMap;

use lite_rerank::losses::LossKind;
use lite_rerank::nn::{flat_lite_forward, AdamWConfig};
use lite_rerank::rerank::{train_head, TrainConfig, TrainRecord};
use lite_rerank::scorers::{similarity_matrix, HeadParams, ScorerKind};
use lite_rerank::theory::{best_rank_o_error, build_gram_spectrum, groundtruth_score};
use lite_rerank::Matrix;

fn main() {
    let (p, l) = (2usize, 2usize);
    let instance = build_gram_spectrum(p, l).unwrap();
    let n = instance.universe_size();
    println!("Universe {{0,1}}^({p}x{l}): {n} members, target = trace(X^T Y)\n");

    // The spectral floor for any dual encoder of embedding dim PL-1.
    let floor = best_rank_o_error(&instance, p * l - 1).unwrap();
    println!("best possible rank-{} dual encoder MSE: {floor}", p * l - 1);

    // Training data: every query against the whole universe, teacher scores
    // equal to the ground truth, identity encoders (embeddings are the
    // members themselves).
    let members: Vec<Matrix> = (0..n).map(|k| instance.member(k)).collect();
    let embeddings: HashMap<u64, Matrix> = members
        .iter()
        .enumerate()
        .map(|(k, m)| (k as u64, m.clone()))
        .collect();
    let records: Vec<TrainRecord> = (0..n as u64)
        .map(|q| TrainRecord {
            query_id: q,
            doc_ids: (0..n as u64).collect(),
            teacher: Some(
                members
                    .iter()
                    .map(|d| groundtruth_score(&members[q as usize], d).unwrap())
                    .collect(),
            ),
        })
        .collect();

    let config = TrainConfig {
        steps: 5000,
        batch_size: records.len(),
        adamw: AdamWConfig {
            lr: 1e-3,
            weight_decay: 0.0,
            ..AdamWConfig::default()
        },
        hidden: 16,
        ..TrainConfig::default()
    };
    println!("training a flattened head: hidden 16, 5000 full-batch steps, seed 0 ...");
    let outcome = train_head(
        &records,
        &embeddings,
        &embeddings,
        &ScorerKind::FlatLite,
        LossKind::Mse,
        &config,
        0,
    )
    .unwrap();
    for (step, loss) in outcome.losses.iter().enumerate().step_by(1000) {
        println!("  step {step:>5}: batch loss {loss:.3e}");
    }
    println!(
        "  step {:>5}: batch loss {:.3e}",
        outcome.losses.len() - 1,
        outcome.losses.last().unwrap()
    );

    // Evaluate the trained head over every pair in the universe.
    let head = match &outcome.head {
        HeadParams::Flat(f) => f,
        _ => unreachable!(),
    };
    let mut sq_err = 0.0;
    for x in &members {
        for y in &members {
            let s = similarity_matrix(x, y).unwrap();
            let (score, _) = flat_lite_forward(&s, head).unwrap();
            let want = groundtruth_score(x, y).unwrap();
            sq_err += (score - want) * (score - want);
        }
    }
    let mse = sq_err / (n * n) as f64;
    println!(
        "\ntrained flattened head, normalized MSE over all {} pairs: {mse:.3e}",
        n * n
    );
    println!("dual-encoder floor at rank {}: {floor}", p * l - 1);
    assert!(mse < 0.01);
    println!(
        "\nThe learned head is {}x below the best any rank-3 dual encoder can do.",
        (floor / mse).round()
    );
}
