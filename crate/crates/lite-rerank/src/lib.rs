//! Late-interaction relevance scoring with learnable reductions.
//!
//! Query and document token embeddings arrive as `P x L` matrices from any
//! upstream encoder; this crate supplies everything after that point:
//!
//! * every scorer over the token similarity matrix `S = Q^T D`: the
//!   dual-encoder dot product, sum-max, top-k, kernel pooling, and two
//!   learnable MLP heads (flattened and separable) with exact analytic
//!   gradients and an AdamW trainer ([`scorers`], [`nn`]);
//! * a persistent document-embedding index with token-count and
//!   token-dimension reduction and exact storage accounting ([`index`]);
//! * re-ranking, distillation-style training losses, MRR@10 / nDCG@10, and
//!   an operation-count bench harness ([`rerank`], [`losses`], [`metrics`]);
//! * a numerical verifier for the expressivity gap between rank-limited
//!   dual encoders and similarity-matrix scorers ([`theory`]).
//!
//! # Examples
//!
//! Each major capability has a runnable example:
//!
//! ```bash
//! cargo run --release --example scorers_tour        # every scorer on small matrices
//! cargo run --release --example lite_heads          # heads, gradients, finite differences
//! cargo run --release --example train_flat_trace    # the trace-task training contrast
//! cargo run --release --example index_storage       # reductions and storage ratios
//! cargo run --release --example rerank_end_to_end   # index -> rerank -> evaluate
//! cargo run --release --example theory_verification # rank floor and permutation probes
//! cargo run --release --example bench_scorers       # latency / dot / FLOP accounting
//! ```
//!
//! The same operations are scriptable through the `lite-rerank` binary; see
//! the README for the subcommands and file formats.

pub mod checkpoint;
pub mod error;
pub mod index;
pub mod losses;
pub mod metrics;
pub mod nn;
pub mod rerank;
pub mod scorers;
pub mod tensor;
pub mod theory;

pub use error::{Error, Result};
pub use tensor::Matrix;
