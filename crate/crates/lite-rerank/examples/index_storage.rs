//! Document-index reductions and storage accounting.
//!
//! ```bash
//! cargo run --release --example index_storage
//! ```

use lite_rerank::index::{
    avg_pool_tokens, build_index, project_dims, project_tokens, DocumentIndex, Reduction,
};
use lite_rerank::Matrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let dir = std::env::temp_dir().join("lite-rerank-index-example");
    std::fs::create_dir_all(&dir).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let p = 32usize;
    let l2 = 200usize;
    let n_docs = 500u64;
    let docs: Vec<(u64, Matrix)> = (0..n_docs)
        .map(|i| {
            let data = (0..p * l2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            (i, Matrix::new(p, l2, data).unwrap())
        })
        .collect();
    println!("{n_docs} synthetic documents, {p} dims x {l2} tokens each\n");

    // Token-count reduction: average pooling vs a learned projection.
    let d0 = &docs[0].1;
    let pooled = avg_pool_tokens(d0, 4).unwrap();
    println!(
        "avg-pool factor 4: {}x{} -> {}x{}",
        d0.rows(),
        d0.cols(),
        pooled.rows(),
        pooled.cols()
    );

    let token_proj = Matrix::new(
        l2,
        50,
        (0..l2 * 50).map(|_| rng.gen_range(-0.1..0.1)).collect(),
    )
    .unwrap();
    let projected = project_tokens(d0, &token_proj).unwrap();
    println!(
        "token projection:  {}x{} -> {}x{}",
        d0.rows(),
        d0.cols(),
        projected.rows(),
        projected.cols()
    );

    let dim_proj =
        Matrix::new(8, p, (0..8 * p).map(|_| rng.gen_range(-0.1..0.1)).collect()).unwrap();
    let reduced = project_dims(d0, &dim_proj).unwrap();
    println!(
        "dim projection:    {}x{} -> {}x{}\n",
        d0.rows(),
        d0.cols(),
        reduced.rows(),
        reduced.cols()
    );

    // Build three indexes and compare storage.
    let configs = [
        ("200 tokens (full)", Reduction::None),
        ("50 tokens (avg-pool 4)", Reduction::AvgPool { factor: 4 }),
        (
            "1 token (pooled, dual-encoder style)",
            Reduction::AvgPool { factor: 200 },
        ),
    ];
    println!(
        "{:<38} {:>14} {:>14} {:>12}",
        "index", "payload bytes", "file bytes", "vs full"
    );
    let mut payloads = Vec::new();
    for (name, reduction) in &configs {
        let path = dir.join(format!("{}.idx", name.split(' ').next().unwrap()));
        let header = build_index(docs.clone(), reduction, &path).unwrap();
        let on_disk = std::fs::metadata(&path).unwrap().len();
        assert_eq!(on_disk, header.file_bytes());
        payloads.push(header.payload_bytes());
        println!(
            "{:<38} {:>14} {:>14} {:>11.4}x",
            name,
            header.payload_bytes(),
            on_disk,
            header.payload_bytes() as f64 / payloads[0] as f64
        );
    }
    assert_eq!(payloads[1] * 4, payloads[0]);
    assert_eq!(payloads[2] * 200, payloads[0]);

    // Values survive the f32 round trip exactly.
    let path = dir.join("200.idx");
    let index = DocumentIndex::open(&path).unwrap();
    let loaded = index.load_doc(7).unwrap();
    let original = &docs[7].1;
    for (a, b) in original.data().iter().zip(loaded.data()) {
        assert_eq!(*b, (*a as f32) as f64);
    }
    println!("\nround trip: every stored value identical at f32 precision");

    std::fs::remove_dir_all(&dir).ok();
    println!("Done.");
}
