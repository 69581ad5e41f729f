//! Thin command-line front end over the library.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use lite_rerank::checkpoint::{load_head, load_projection, save_head, save_projection};
use lite_rerank::index::{build_index, DocumentIndex, Reduction};
use lite_rerank::losses::LossKind;
use lite_rerank::nn::AdamWConfig;
use lite_rerank::rerank::{
    bench, evaluate, load_embeddings, read_candidates, read_qrels, read_run, read_train_records,
    rerank_to_run, train_head, write_run, BenchConfig, TrainConfig,
};
use lite_rerank::scorers::ScorerKind;
use lite_rerank::theory::verify_rank_floor_with;
use lite_rerank::{Matrix, Result};

#[derive(Parser)]
#[command(
    name = "lite-rerank",
    version,
    about = "Late-interaction re-ranking: index building, scoring, head training, evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a document index from an embeddings file, optionally reducing
    /// tokens or dimensions first.
    BuildIndex {
        /// Input embeddings (index-format file of id + f32 matrix records).
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Average adjacent token columns in blocks of this factor.
        #[arg(long, conflicts_with_all = ["token_proj", "dim_proj"])]
        avg_pool: Option<usize>,
        /// Token-axis projection checkpoint (L2 x L2').
        #[arg(long)]
        token_proj: Option<PathBuf>,
        /// Dimension projection checkpoint (P' x P).
        #[arg(long)]
        dim_proj: Option<PathBuf>,
    },
    /// Re-rank candidate lists and write a run file.
    Rerank {
        #[arg(long)]
        index: PathBuf,
        /// Query embeddings (same binary layout as the index).
        #[arg(long)]
        queries: PathBuf,
        /// Candidates file: query_id TAB doc_id,doc_id,...
        #[arg(long)]
        candidates: PathBuf,
        /// de | colbert | topk:K | knrm | flat-lite | sep-lite
        #[arg(long)]
        scorer: String,
        #[arg(long)]
        head: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a scorer head on tuple data and write a checkpoint.
    Train {
        /// Training tuples: query_id TAB pos TAB neg,... [TAB teacher,...]
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        index: PathBuf,
        /// Separate query embeddings; defaults to resolving query ids
        /// through the index.
        #[arg(long)]
        queries: Option<PathBuf>,
        #[arg(long)]
        scorer: String,
        /// kl | margin-mse | xent | mse
        #[arg(long)]
        loss: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1000)]
        steps: usize,
        #[arg(long, default_value_t = 8)]
        batch: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long, default_value_t = 0.01)]
        weight_decay: f64,
        /// Separable head widths.
        #[arg(long, default_value_t = 360)]
        m1: usize,
        #[arg(long, default_value_t = 2400)]
        m2: usize,
        /// Flattened head width.
        #[arg(long, default_value_t = 64)]
        hidden: usize,
        /// Optional path for the per-step loss curve, one value per line.
        #[arg(long)]
        loss_out: Option<PathBuf>,
    },
    /// Time scorers over an index and report operation counts.
    Bench {
        #[arg(long)]
        index: PathBuf,
        /// Comma-separated scorer list.
        #[arg(long)]
        scorers: String,
        #[arg(long, default_value_t = 4)]
        queries: usize,
        #[arg(long, default_value_t = 3)]
        reps: usize,
        #[arg(long, default_value_t = 30)]
        l1: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Score a run file against qrels.
    Evaluate {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        qrels: PathBuf,
    },
    /// Verify the dual-encoder rank floor and the trace-representation
    /// contrast for one universe shape.
    VerifyTheory {
        #[arg(long)]
        p: usize,
        #[arg(long)]
        l: usize,
        /// Also report the best rank-O error for this O.
        #[arg(long)]
        o: Option<usize>,
    },
}

fn load_queries_with_projection(path: &Path, index_path: &Path) -> Result<HashMap<u64, Matrix>> {
    let mut queries = load_embeddings(path)?;
    // A dimension projection used at build time must be applied to queries
    // too; build-index leaves it next to the index.
    let proj_path = sidecar(index_path, "dimproj");
    if proj_path.exists() {
        let proj = load_projection(&proj_path)?;
        for q in queries.values_mut() {
            *q = lite_rerank::index::project_dims(q, &proj)?;
        }
    }
    Ok(queries)
}

fn sidecar(index_path: &Path, suffix: &str) -> PathBuf {
    let mut name = index_path.file_name().unwrap_or_default().to_os_string();
    name.push(".");
    name.push(suffix);
    index_path.with_file_name(name)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::BuildIndex {
            input,
            out,
            avg_pool,
            token_proj,
            dim_proj,
        } => {
            let reduction = match (avg_pool, &token_proj, &dim_proj) {
                (Some(factor), _, _) => Reduction::AvgPool { factor },
                (None, Some(t), Some(d)) => Reduction::Composed {
                    token: load_projection(t)?,
                    dim: load_projection(d)?,
                },
                (None, Some(t), None) => Reduction::TokenProjection(load_projection(t)?),
                (None, None, Some(d)) => Reduction::DimProjection(load_projection(d)?),
                (None, None, None) => Reduction::None,
            };
            let source = DocumentIndex::open(&input)?;
            let docs = source.load_all()?;
            let header = build_index(docs, &reduction, &out)?;
            // Keep projections next to the index so queries can be reduced
            // consistently at query time.
            match &reduction {
                Reduction::TokenProjection(t) => save_projection(sidecar(&out, "tokproj"), t)?,
                Reduction::DimProjection(d) => save_projection(sidecar(&out, "dimproj"), d)?,
                Reduction::Composed { token, dim } => {
                    save_projection(sidecar(&out, "tokproj"), token)?;
                    save_projection(sidecar(&out, "dimproj"), dim)?;
                }
                _ => {}
            }
            println!(
                "indexed {} docs at {}x{} ({} payload bytes, {} storage bytes, {} file bytes)",
                header.doc_count,
                header.token_dim,
                header.tokens_per_doc,
                header.payload_bytes(),
                header.storage_bytes(),
                header.file_bytes(),
            );
        }
        Command::Rerank {
            index,
            queries,
            candidates,
            scorer,
            head,
            out,
        } => {
            let kind: ScorerKind = scorer.parse()?;
            let head = head.map(load_head).transpose()?;
            let idx = DocumentIndex::open(&index)?;
            let query_map = load_queries_with_projection(&queries, &index)?;
            let cands = read_candidates(&candidates)?;
            let lines = rerank_to_run(&query_map, &cands, &idx, &kind, head.as_ref())?;
            write_run(&out, &lines)?;
            println!(
                "wrote {} ranked lines for {} queries to {}",
                lines.len(),
                cands.len(),
                out.display()
            );
        }
        Command::Train {
            data,
            index,
            queries,
            scorer,
            loss,
            seed,
            out,
            steps,
            batch,
            lr,
            weight_decay,
            m1,
            m2,
            hidden,
            loss_out,
        } => {
            let kind: ScorerKind = scorer.parse()?;
            let loss: LossKind = loss.parse()?;
            let records = read_train_records(&data)?;
            let idx = DocumentIndex::open(&index)?;
            let docs: HashMap<u64, Matrix> = idx.load_all()?.into_iter().collect();
            let query_map = match queries {
                Some(path) => load_queries_with_projection(&path, &index)?,
                None => docs.clone(),
            };
            let config = TrainConfig {
                steps,
                batch_size: batch,
                adamw: AdamWConfig {
                    lr,
                    weight_decay,
                    ..AdamWConfig::default()
                },
                m1,
                m2,
                hidden,
            };
            let outcome = train_head(&records, &query_map, &docs, &kind, loss, &config, seed)?;
            save_head(&out, &outcome.head)?;
            if let Some(loss_path) = loss_out {
                let text: String = outcome.losses.iter().map(|l| format!("{l}\n")).collect();
                std::fs::write(&loss_path, text).map_err(|e| lite_rerank::Error::Io {
                    path: loss_path.clone(),
                    source: e,
                })?;
            }
            println!(
                "trained {kind} head for {steps} steps: first loss {:.6e}, final loss {:.6e}, checkpoint {}",
                outcome.losses.first().unwrap(),
                outcome.losses.last().unwrap(),
                out.display()
            );
        }
        Command::Bench {
            index,
            scorers,
            queries,
            reps,
            l1,
            seed,
        } => {
            let kinds = scorers
                .split(',')
                .map(|s| s.trim().parse())
                .collect::<Result<Vec<ScorerKind>>>()?;
            let idx = DocumentIndex::open(&index)?;
            let cfg = BenchConfig {
                num_queries: queries,
                reps,
                l1,
                seed,
                ..BenchConfig::default()
            };
            let reports = bench(&idx, &kinds, &cfg)?;
            println!(
                "{:<12} {:>14} {:>16} {:>16} {:>16} {:>14}",
                "scorer",
                "ms/query",
                "dots/query",
                "analytic dots",
                "head flops/doc",
                "payload bytes"
            );
            for r in reports {
                println!(
                    "{:<12} {:>14.3} {:>16} {:>16} {:>16} {:>14}",
                    r.scorer,
                    r.median_ms_per_query,
                    r.dot_products_per_query,
                    r.analytic_dot_products,
                    r.head_flops_per_doc,
                    r.index_payload_bytes
                );
            }
        }
        Command::Evaluate { run, qrels } => {
            let run_lines = read_run(&run)?;
            let qrels_map = read_qrels(&qrels)?;
            let report = evaluate(&run_lines, &qrels_map)?;
            for (qid, rr, ndcg) in &report.per_query {
                println!("query\t{qid}\tmrr@10\t{rr:.6}\tndcg@10\t{ndcg:.6}");
            }
            println!(
                "aggregate\tmrr@10\t{:.6}\tndcg@10\t{:.6}",
                report.mrr_at_10, report.ndcg_at_10
            );
        }
        Command::VerifyTheory { p, l, o } => {
            let extra: Vec<usize> = o.into_iter().collect();
            let report = verify_rank_floor_with(p, l, &extra)?;
            println!("{report}");
            if !report.pass() {
                std::process::exit(1);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
