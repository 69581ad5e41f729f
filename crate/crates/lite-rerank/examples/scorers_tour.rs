//! Every scorer on small hand-checkable matrices.
//!
//! ```bash
//! cargo run --release --example scorers_tour
//! ```

use lite_rerank::scorers::{
    colbert_score, colbert_topk_score, de_score, knrm_features, knrm_score, score,
    similarity_matrix, HeadParams, KnrmParams, ScorerKind,
};
use lite_rerank::Matrix;

fn main() {
    println!("Similarity matrix and reductions");
    println!("================================\n");

    // Two query tokens (identity columns) against three document tokens.
    let q = Matrix::identity(2);
    let d = Matrix::from_rows(&[vec![1.0, 2.0, 0.0], vec![0.0, 1.0, 3.0]]).unwrap();
    let s = similarity_matrix(&q, &d).unwrap();
    println!("Q = I_2, D = [[1,2,0],[0,1,3]]");
    println!("S = Q^T D:");
    for i in 0..s.rows() {
        println!("  {:?}", s.row(i));
    }

    // Sum-max: each query token picks its best-aligned document token.
    let sum_max = colbert_score(&s);
    println!("\nsum-max reduction: max(1,2,0) + max(0,1,3) = {sum_max}");
    assert_eq!(sum_max, 5.0);

    // Top-k widens each row's contribution to its k best alignments.
    for k in 1..=3 {
        println!("top-{k}: {}", colbert_topk_score(&s, k).unwrap());
    }
    assert_eq!(colbert_topk_score(&s, 2).unwrap(), 7.0);

    // Kernel pooling: Gaussian kernels over the entries of S, log-summed
    // per query token, combined with a learned weight vector. On a perfect
    // single match the exact-match kernel contributes log(exp(0)) = 0 and
    // the 0.9 kernel contributes exactly -0.5.
    let knrm = KnrmParams::default_config();
    let perfect = Matrix::new(1, 1, vec![1.0]).unwrap();
    let phi = knrm_features(&perfect, &knrm).unwrap();
    println!("\nkernel features for S = [[1.0]]:");
    println!("  exact-match kernel (mu=1.0):  phi = {}", phi[10]);
    println!("  near-match kernel (mu=0.9):   phi = {}", phi[0]);
    assert_eq!(phi[10], 0.0);
    assert!((phi[0] + 0.5).abs() < 1e-12);
    println!(
        "  score with unit weights = {:.6}",
        knrm_score(&perfect, &knrm).unwrap()
    );

    // Dual-encoder baseline: pool each side to one vector, one dot product.
    let q_pooled = q.col_mean();
    let d_pooled = d.col_mean();
    println!(
        "\ndual encoder: mean-pooled dot = {:.6}",
        de_score(&q_pooled, &d_pooled).unwrap()
    );

    // The uniform dispatch covers all of the above.
    println!("\nDispatch through ScorerKind");
    println!("---------------------------");
    for kind in [
        ScorerKind::De,
        ScorerKind::Colbert,
        ScorerKind::ColbertTopK(2),
        ScorerKind::Knrm,
    ] {
        let head = match kind {
            ScorerKind::Knrm => Some(HeadParams::Knrm(knrm.clone())),
            _ => None,
        };
        let v = score(&kind, &q, &d, head.as_ref()).unwrap();
        println!("  {kind:<10} -> {v:.6}");
    }

    println!("\nDone.");
}
