//! End-to-end checks of the command-line surface: every subcommand runs
//! against small synthetic inputs in a temp directory.

use std::collections::HashMap;
use std::path::Path;
use std::process::Command;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use lite_rerank::checkpoint::{load_head, save_head, save_projection};
use lite_rerank::index::{build_index, DocumentIndex, Reduction};
use lite_rerank::rerank::read_run;
use lite_rerank::scorers::{HeadParams, KnrmParams};
use lite_rerank::Matrix;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lite-rerank"))
}

fn run_ok(cmd: &mut Command) -> String {
    let output = cmd.output().expect("spawn");
    let stdout = String::from_utf8_lossy(&output.stdout).into_owned();
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(
        output.status.success(),
        "command failed\nstdout: {stdout}\nstderr: {stderr}"
    );
    stdout
}

fn write_embeddings(path: &Path, items: &[(u64, Matrix)]) {
    build_index(items.to_vec(), &Reduction::None, path).unwrap();
}

fn synthetic_docs(n: u64, p: usize, l: usize, seed: u64) -> Vec<(u64, Matrix)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let data = (0..p * l).map(|_| rng.gen_range(-1.0..1.0)).collect();
            (i, Matrix::new(p, l, data).unwrap())
        })
        .collect()
}

#[test]
fn verify_theory_golden_output() {
    let stdout = run_ok(bin().args(["verify-theory", "--p", "2", "--l", "2", "--o", "0"]));
    assert!(stdout.contains("rank-bound verification: P=2 L=2 (PL=4, universe=16)"));
    assert!(stdout.contains("eigenvalues: 20.000000000 4.000000000 4.000000000"));
    assert!(stdout.contains("spectrum match (1e-9 relative): PASS"));
    assert!(stdout.contains("best rank-3 normalized error: 0.0625000000 (floor 0.0625000000)"));
    assert!(stdout.contains("rank floor match (1e-9 absolute): PASS"));
    assert!(stdout.contains("best rank-0 normalized error:"));
    assert!(stdout.contains("exact trace representation (1e-12): PASS"));
    assert!(stdout.contains("overall: PASS"));

    // The rank bound needs two tokens per side.
    let output = bin()
        .args(["verify-theory", "--p", "1", "--l", "1"])
        .output()
        .unwrap();
    assert!(!output.status.success());
}

#[test]
fn build_rerank_evaluate_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let embeds = dir.path().join("docs.embeds");
    let index = dir.path().join("docs.idx");
    let queries = dir.path().join("queries.embeds");
    let candidates = dir.path().join("cands.tsv");
    let run = dir.path().join("run.tsv");
    let qrels = dir.path().join("qrels.tsv");

    write_embeddings(&embeds, &synthetic_docs(20, 4, 8, 1));
    write_embeddings(&queries, &synthetic_docs(3, 4, 5, 2));
    std::fs::write(&candidates, "0\t0,1,2,3,4\n1\t5,6,7\n2\t8,9,10,11\n").unwrap();

    let stdout = run_ok(bin().args([
        "build-index",
        "--in",
        embeds.to_str().unwrap(),
        "--out",
        index.to_str().unwrap(),
        "--avg-pool",
        "2",
    ]));
    assert!(stdout.contains("indexed 20 docs at 4x4"));

    run_ok(bin().args([
        "rerank",
        "--index",
        index.to_str().unwrap(),
        "--queries",
        queries.to_str().unwrap(),
        "--candidates",
        candidates.to_str().unwrap(),
        "--scorer",
        "colbert",
        "--out",
        run.to_str().unwrap(),
    ]));
    let lines = read_run(&run).unwrap();
    assert_eq!(lines.len(), 5 + 3 + 4);
    assert!(lines.iter().any(|l| l.query_id == 1 && l.rank == 1));

    // Give every query one relevant document and evaluate.
    std::fs::write(&qrels, "0\t2\t1\n1\t6\t1\n2\t9\t2\n").unwrap();
    let stdout = run_ok(bin().args([
        "evaluate",
        "--run",
        run.to_str().unwrap(),
        "--qrels",
        qrels.to_str().unwrap(),
    ]));
    assert!(stdout.contains("aggregate\tmrr@10"));
    assert_eq!(stdout.matches("query\t").count(), 3);
}

#[test]
fn dim_projection_sidecar_applies_to_queries() {
    let dir = tempfile::tempdir().unwrap();
    let embeds = dir.path().join("docs.embeds");
    let index = dir.path().join("docs.idx");
    let queries = dir.path().join("queries.embeds");
    let candidates = dir.path().join("cands.tsv");
    let run = dir.path().join("run.tsv");
    let proj = dir.path().join("proj.ckpt");

    write_embeddings(&embeds, &synthetic_docs(6, 6, 4, 3));
    write_embeddings(&queries, &synthetic_docs(1, 6, 3, 4));
    std::fs::write(&candidates, "0\t0,1,2,3,4,5\n").unwrap();

    // Project 6 dims down to 2.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let projection =
        Matrix::new(2, 6, (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    save_projection(&proj, &projection).unwrap();

    run_ok(bin().args([
        "build-index",
        "--in",
        embeds.to_str().unwrap(),
        "--out",
        index.to_str().unwrap(),
        "--dim-proj",
        proj.to_str().unwrap(),
    ]));
    let opened = DocumentIndex::open(&index).unwrap();
    assert_eq!(opened.header().token_dim, 2);
    assert!(index.with_file_name("docs.idx.dimproj").exists());

    // Reranking succeeds because the sidecar projects queries to 2 dims.
    run_ok(bin().args([
        "rerank",
        "--index",
        index.to_str().unwrap(),
        "--queries",
        queries.to_str().unwrap(),
        "--candidates",
        candidates.to_str().unwrap(),
        "--scorer",
        "colbert",
        "--out",
        run.to_str().unwrap(),
    ]));
    assert_eq!(read_run(&run).unwrap().len(), 6);
}

#[test]
fn train_writes_checkpoint_and_loss_curve() {
    let dir = tempfile::tempdir().unwrap();
    let embeds = dir.path().join("all.embeds");
    let index = dir.path().join("all.idx");
    let data = dir.path().join("train.tsv");
    let ckpt = dir.path().join("head.ckpt");
    let losses = dir.path().join("losses.txt");

    // Queries resolve through the index when --queries is omitted, so the
    // records reference ids of the same embeddings file.
    let docs = synthetic_docs(10, 3, 4, 6);
    write_embeddings(&embeds, &docs);

    // Teacher scores: sum-max of the true similarity matrices.
    let lookup: HashMap<u64, Matrix> = docs.into_iter().collect();
    let mut text = String::new();
    for q in 0..4u64 {
        let doc_ids: Vec<u64> = (4..10).collect();
        let teacher: Vec<String> = std::iter::once(q)
            .chain(doc_ids.iter().copied())
            .map(|d| {
                let s = lite_rerank::scorers::similarity_matrix(&lookup[&q], &lookup[&d]).unwrap();
                format!("{}", lite_rerank::scorers::colbert_score(&s))
            })
            .collect();
        let negs: Vec<String> = doc_ids.iter().map(u64::to_string).collect();
        text.push_str(&format!(
            "{q}\t{q}\t{}\t{}\n",
            negs.join(","),
            teacher.join(",")
        ));
    }
    std::fs::write(&data, text).unwrap();

    run_ok(bin().args([
        "build-index",
        "--in",
        embeds.to_str().unwrap(),
        "--out",
        index.to_str().unwrap(),
    ]));
    let stdout = run_ok(bin().args([
        "train",
        "--data",
        data.to_str().unwrap(),
        "--index",
        index.to_str().unwrap(),
        "--scorer",
        "flat-lite",
        "--loss",
        "margin-mse",
        "--seed",
        "0",
        "--steps",
        "200",
        "--batch",
        "4",
        "--hidden",
        "16",
        "--weight-decay",
        "0",
        "--out",
        ckpt.to_str().unwrap(),
        "--loss-out",
        losses.to_str().unwrap(),
    ]));
    assert!(stdout.contains("trained flat-lite head"));

    let head = load_head(&ckpt).unwrap();
    assert!(matches!(head, HeadParams::Flat(_)));
    let curve: Vec<f64> = std::fs::read_to_string(&losses)
        .unwrap()
        .lines()
        .map(|l| l.parse().unwrap())
        .collect();
    assert_eq!(curve.len(), 200);
    assert!(
        curve.last().unwrap() < &curve[0],
        "loss did not drop: {} -> {}",
        curve[0],
        curve.last().unwrap()
    );

    // The trained head reranks through the CLI.
    let candidates = dir.path().join("cands.tsv");
    let run = dir.path().join("run.tsv");
    std::fs::write(&candidates, "0\t4,5,6,7\n").unwrap();
    run_ok(bin().args([
        "rerank",
        "--index",
        index.to_str().unwrap(),
        "--queries",
        index.to_str().unwrap(),
        "--candidates",
        candidates.to_str().unwrap(),
        "--scorer",
        "flat-lite",
        "--head",
        ckpt.to_str().unwrap(),
        "--out",
        run.to_str().unwrap(),
    ]));
    assert_eq!(read_run(&run).unwrap().len(), 4);
}

#[test]
fn bench_reports_all_scorers() {
    let dir = tempfile::tempdir().unwrap();
    let embeds = dir.path().join("docs.embeds");
    let index = dir.path().join("docs.idx");
    write_embeddings(&embeds, &synthetic_docs(12, 4, 6, 7));
    run_ok(bin().args([
        "build-index",
        "--in",
        embeds.to_str().unwrap(),
        "--out",
        index.to_str().unwrap(),
    ]));

    let stdout = run_ok(bin().args([
        "bench",
        "--index",
        index.to_str().unwrap(),
        "--scorers",
        "de,colbert,topk:2,knrm,flat-lite,sep-lite",
        "--queries",
        "2",
        "--reps",
        "1",
        "--l1",
        "5",
    ]));
    for name in ["de", "colbert", "topk:2", "knrm", "flat-lite", "sep-lite"] {
        assert!(stdout.contains(name), "missing {name} in:\n{stdout}");
    }
    // Analytic dots: 12 for the dual encoder, 12 * 5 * 6 = 360 otherwise.
    assert!(stdout.contains("360"));
}

#[test]
fn rerank_requires_head_for_learned_scorers() {
    let dir = tempfile::tempdir().unwrap();
    let embeds = dir.path().join("docs.embeds");
    let index = dir.path().join("docs.idx");
    let candidates = dir.path().join("cands.tsv");
    write_embeddings(&embeds, &synthetic_docs(3, 3, 4, 8));
    run_ok(bin().args([
        "build-index",
        "--in",
        embeds.to_str().unwrap(),
        "--out",
        index.to_str().unwrap(),
    ]));
    std::fs::write(&candidates, "0\t0,1,2\n").unwrap();

    let output = bin()
        .args([
            "rerank",
            "--index",
            index.to_str().unwrap(),
            "--queries",
            index.to_str().unwrap(),
            "--candidates",
            candidates.to_str().unwrap(),
            "--scorer",
            "knrm",
            "--out",
            dir.path().join("run.tsv").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("requires head parameters"), "{stderr}");

    // With a checkpoint it works.
    let ckpt = dir.path().join("knrm.ckpt");
    save_head(&ckpt, &HeadParams::Knrm(KnrmParams::default_config())).unwrap();
    run_ok(bin().args([
        "rerank",
        "--index",
        index.to_str().unwrap(),
        "--queries",
        index.to_str().unwrap(),
        "--candidates",
        candidates.to_str().unwrap(),
        "--scorer",
        "knrm",
        "--head",
        ckpt.to_str().unwrap(),
        "--out",
        dir.path().join("run.tsv").to_str().unwrap(),
    ]));
}
