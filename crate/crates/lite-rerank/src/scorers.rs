//! Every relevance scorer, as a pure function of the query and document
//! token matrices (or of the similarity matrix directly).
//!
//! Token matrices are `P x L`: one embedding column per token. The
//! similarity matrix `S = Q^T D` collects every query-token / document-token
//! dot product, and each late-interaction scorer is a reduction of `S`:
//!
//! * sum-max: `sum_i max_j S[i][j]`
//! * top-k: `sum_i (sum of the k largest entries of row i)`
//! * kernel pooling: Gaussian kernel features of each row, log-summed and
//!   linearly combined
//! * learned heads: see [`crate::nn`]
//!
//! The dual-encoder baseline pools each side to a single vector (column
//! mean) and takes one dot product.
//!
//! Scoring is deterministic and safe to run concurrently; the optional
//! [`DotCounter`] is atomic so counts stay exact under a parallel scorer
//! fan-out.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::nn::{flat_lite_forward, sep_lite_forward, FlatLiteParams, ParamSet, SepLiteParams};
use crate::tensor::{dot, Matrix};

/// Guard for `log` of an empty kernel sum.
pub const KNRM_LOG_FLOOR: f64 = 1e-10;

/// Counts token-level dot products taken while scoring. Shared by reference
/// and incremented atomically, so one counter can observe a whole parallel
/// re-rank.
#[derive(Debug, Default)]
pub struct DotCounter(AtomicU64);

impl DotCounter {
    pub fn new() -> Self {
        DotCounter(AtomicU64::new(0))
    }

    pub fn add(&self, n: u64) {
        self.0.fetch_add(n, Ordering::Relaxed);
    }

    pub fn count(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.0.store(0, Ordering::Relaxed);
    }
}

/// `S = Q^T D` for token matrices sharing the embedding dimension `P`.
pub fn similarity_matrix(q_tokens: &Matrix, d_tokens: &Matrix) -> Result<Matrix> {
    similarity_matrix_counted(q_tokens, d_tokens, None)
}

/// As [`similarity_matrix`], adding `L1 * L2` to `counter` when present.
pub fn similarity_matrix_counted(
    q_tokens: &Matrix,
    d_tokens: &Matrix,
    counter: Option<&DotCounter>,
) -> Result<Matrix> {
    if q_tokens.rows() != d_tokens.rows() {
        return Err(Error::shape(
            "similarity_matrix",
            q_tokens.shape(),
            d_tokens.shape(),
        ));
    }
    let l1 = q_tokens.cols();
    let l2 = d_tokens.cols();
    let p = q_tokens.rows();
    let mut s = Matrix::zeros(l1, l2);
    for i in 0..l1 {
        for j in 0..l2 {
            let mut acc = 0.0;
            for r in 0..p {
                acc += q_tokens.get(r, i) * d_tokens.get(r, j);
            }
            s.set(i, j, acc);
        }
    }
    if let Some(c) = counter {
        c.add((l1 * l2) as u64);
    }
    Ok(s)
}

/// Dot product of two pooled embeddings.
pub fn de_score(q_pooled: &[f64], d_pooled: &[f64]) -> Result<f64> {
    de_score_counted(q_pooled, d_pooled, None)
}

pub fn de_score_counted(
    q_pooled: &[f64],
    d_pooled: &[f64],
    counter: Option<&DotCounter>,
) -> Result<f64> {
    if q_pooled.len() != d_pooled.len() {
        return Err(Error::shape(
            "de_score",
            (q_pooled.len(), 1),
            (d_pooled.len(), 1),
        ));
    }
    if let Some(c) = counter {
        c.add(1);
    }
    Ok(dot(q_pooled, d_pooled))
}

/// Accumulates per-row contributions in ascending sorted order. The same
/// multiset of values then always sums to the same bits, which makes the
/// reductions below exactly invariant under query-token permutations.
fn canonical_sum(mut per_row: Vec<f64>) -> f64 {
    per_row.sort_by(f64::total_cmp);
    per_row.iter().sum()
}

/// Sum over rows of the row maximum.
///
/// Row contributions are accumulated in a canonical order, so permuting
/// either the rows or the columns of `S` reproduces the score bit for bit.
pub fn colbert_score(s: &Matrix) -> f64 {
    let maxima = (0..s.rows())
        .map(|i| s.row(i).iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    canonical_sum(maxima)
}

/// Sum over rows of the `k` largest entries of each row. `k = 1` coincides
/// with [`colbert_score`] exactly.
///
/// Within a row the top values are added largest first; across rows the
/// contributions are accumulated canonically, as in [`colbert_score`], so
/// row and column permutations cannot perturb the result.
pub fn colbert_topk_score(s: &Matrix, k: usize) -> Result<f64> {
    if k < 1 || k > s.cols() {
        return Err(Error::InvalidArgument(format!(
            "top-k requires 1 <= k <= {}, got {}",
            s.cols(),
            k
        )));
    }
    let mut row = vec![0.0; s.cols()];
    let per_row = (0..s.rows())
        .map(|i| {
            row.copy_from_slice(s.row(i));
            row.sort_by(|a, b| b.total_cmp(a));
            row[..k].iter().sum::<f64>()
        })
        .collect();
    Ok(canonical_sum(per_row))
}

/// Kernel-pooling parameters: `K` Gaussian kernels with fixed means and
/// widths, and a learned combination weight per kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct KnrmParams {
    pub mus: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub w: Vec<f64>,
}

impl KnrmParams {
    /// The standard 11-kernel configuration: means 0.9, 0.7, ..., -0.9 with
    /// width 0.1, plus an exact-match kernel at 1.0 with width 1e-3. The
    /// combination weights start at 1.
    pub fn default_config() -> Self {
        let mut mus: Vec<f64> = (0..10).map(|i| 0.9 - 0.2 * i as f64).collect();
        let mut sigmas = vec![0.1; 10];
        mus.push(1.0);
        sigmas.push(1e-3);
        KnrmParams {
            w: vec![1.0; mus.len()],
            mus,
            sigmas,
        }
    }

    /// Default kernels with a seeded random combination weight.
    pub fn init(seed: u64) -> Self {
        use rand::Rng;
        use rand::SeedableRng;
        let mut p = Self::default_config();
        let k = p.w.len();
        let bound = 1.0 / (k as f64).sqrt();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        p.w = (0..k).map(|_| rng.gen_range(-bound..=bound)).collect();
        p
    }

    pub fn kernels(&self) -> usize {
        self.mus.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mus.is_empty()
            || self.mus.len() != self.sigmas.len()
            || self.mus.len() != self.w.len()
        {
            return Err(Error::InvalidArgument(format!(
                "kernel parameter lengths disagree: mus {}, sigmas {}, w {}",
                self.mus.len(),
                self.sigmas.len(),
                self.w.len()
            )));
        }
        if self.sigmas.iter().any(|&s| s <= 0.0) {
            return Err(Error::InvalidArgument(
                "kernel widths must be strictly positive".into(),
            ));
        }
        Ok(())
    }
}

impl ParamSet for KnrmParams {
    // Only the combination weight trains; means and widths stay fixed.
    fn tensors(&self) -> Vec<&[f64]> {
        vec![&self.w]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.w]
    }
}

/// Per-kernel pooled features:
/// `phi_k = sum_i log(max(sum_j exp(-(S[i][j] - mu_k)^2 / (2 sigma_k^2)), floor))`.
///
/// Each row is sorted (descending) before the kernel sums so that column
/// permutations of `S` reproduce the features bit for bit.
pub fn knrm_features(s: &Matrix, params: &KnrmParams) -> Result<Vec<f64>> {
    params.validate()?;
    let k = params.kernels();
    let mut phi = vec![0.0; k];
    let mut row = vec![0.0; s.cols()];
    for i in 0..s.rows() {
        row.copy_from_slice(s.row(i));
        row.sort_by(|a, b| b.total_cmp(a));
        for (ki, f) in phi.iter_mut().enumerate() {
            let mu = params.mus[ki];
            let two_sigma_sq = 2.0 * params.sigmas[ki] * params.sigmas[ki];
            let sum: f64 = row
                .iter()
                .map(|&v| (-(v - mu) * (v - mu) / two_sigma_sq).exp())
                .sum();
            *f += sum.max(KNRM_LOG_FLOOR).ln();
        }
    }
    Ok(phi)
}

/// `w . phi(S)`.
pub fn knrm_score(s: &Matrix, params: &KnrmParams) -> Result<f64> {
    Ok(dot(&params.w, &knrm_features(s, params)?))
}

/// Which scorer to run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScorerKind {
    De,
    Colbert,
    ColbertTopK(usize),
    Knrm,
    FlatLite,
    SepLite,
}

impl ScorerKind {
    /// Scorers that reduce a similarity matrix (everything but the
    /// dual-encoder baseline).
    pub fn uses_similarity_matrix(&self) -> bool {
        !matches!(self, ScorerKind::De)
    }

    pub fn trainable(&self) -> bool {
        matches!(
            self,
            ScorerKind::Knrm | ScorerKind::FlatLite | ScorerKind::SepLite
        )
    }
}

impl fmt::Display for ScorerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScorerKind::De => write!(f, "de"),
            ScorerKind::Colbert => write!(f, "colbert"),
            ScorerKind::ColbertTopK(k) => write!(f, "topk:{k}"),
            ScorerKind::Knrm => write!(f, "knrm"),
            ScorerKind::FlatLite => write!(f, "flat-lite"),
            ScorerKind::SepLite => write!(f, "sep-lite"),
        }
    }
}

impl FromStr for ScorerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "de" => Ok(ScorerKind::De),
            "colbert" => Ok(ScorerKind::Colbert),
            "knrm" => Ok(ScorerKind::Knrm),
            "flat-lite" => Ok(ScorerKind::FlatLite),
            "sep-lite" => Ok(ScorerKind::SepLite),
            other => {
                if let Some(k) = other.strip_prefix("topk:") {
                    let k: usize = k.parse().map_err(|_| {
                        Error::InvalidArgument(format!("bad top-k count in scorer '{other}'"))
                    })?;
                    if k < 1 {
                        return Err(Error::InvalidArgument(
                            "top-k count must be at least 1".into(),
                        ));
                    }
                    Ok(ScorerKind::ColbertTopK(k))
                } else {
                    Err(Error::InvalidArgument(format!(
                        "unknown scorer '{other}' (expected de, colbert, topk:K, knrm, flat-lite, sep-lite)"
                    )))
                }
            }
        }
    }
}

/// Head parameters for the scorers that need them.
#[derive(Debug, Clone, PartialEq)]
pub enum HeadParams {
    Knrm(KnrmParams),
    Flat(FlatLiteParams),
    Sep(SepLiteParams),
}

impl HeadParams {
    pub fn kind_name(&self) -> &'static str {
        match self {
            HeadParams::Knrm(_) => "knrm",
            HeadParams::Flat(_) => "flat-lite",
            HeadParams::Sep(_) => "sep-lite",
        }
    }
}

fn require_head<'a>(kind: &ScorerKind, head: Option<&'a HeadParams>) -> Result<&'a HeadParams> {
    head.ok_or_else(|| Error::MissingHead {
        scorer: kind.to_string(),
    })
}

/// Scores a similarity matrix with any matrix-consuming scorer.
pub fn score_matrix(kind: &ScorerKind, s: &Matrix, head: Option<&HeadParams>) -> Result<f64> {
    match kind {
        ScorerKind::De => Err(Error::InvalidArgument(
            "the dual-encoder scorer does not consume a similarity matrix".into(),
        )),
        ScorerKind::Colbert => Ok(colbert_score(s)),
        ScorerKind::ColbertTopK(k) => colbert_topk_score(s, *k),
        ScorerKind::Knrm => match require_head(kind, head)? {
            HeadParams::Knrm(p) => knrm_score(s, p),
            other => Err(Error::WrongHead {
                scorer: kind.to_string(),
                head: other.kind_name().into(),
            }),
        },
        ScorerKind::FlatLite => match require_head(kind, head)? {
            HeadParams::Flat(p) => Ok(flat_lite_forward(s, p)?.0),
            other => Err(Error::WrongHead {
                scorer: kind.to_string(),
                head: other.kind_name().into(),
            }),
        },
        ScorerKind::SepLite => match require_head(kind, head)? {
            HeadParams::Sep(p) => Ok(sep_lite_forward(s, p)?.0),
            other => Err(Error::WrongHead {
                scorer: kind.to_string(),
                head: other.kind_name().into(),
            }),
        },
    }
}

/// Uniform dispatch over every scorer, from token matrices.
///
/// The dual-encoder side pools each token matrix by column mean; all other
/// scorers go through the similarity matrix.
pub fn score(
    kind: &ScorerKind,
    q_tokens: &Matrix,
    d_tokens: &Matrix,
    head: Option<&HeadParams>,
) -> Result<f64> {
    score_counted(kind, q_tokens, d_tokens, head, None)
}

pub fn score_counted(
    kind: &ScorerKind,
    q_tokens: &Matrix,
    d_tokens: &Matrix,
    head: Option<&HeadParams>,
    counter: Option<&DotCounter>,
) -> Result<f64> {
    match kind {
        ScorerKind::De => {
            if q_tokens.rows() != d_tokens.rows() {
                return Err(Error::shape("de_score", q_tokens.shape(), d_tokens.shape()));
            }
            de_score_counted(&q_tokens.col_mean(), &d_tokens.col_mean(), counter)
        }
        _ => {
            let s = similarity_matrix_counted(q_tokens, d_tokens, counter)?;
            score_matrix(kind, &s, head)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn example_s() -> Matrix {
        mat(&[&[1.0, 2.0, 0.0], &[0.0, 1.0, 3.0]])
    }

    #[test]
    fn similarity_identity_query_reads_off_document() {
        let q = Matrix::identity(2);
        let d = example_s();
        let s = similarity_matrix(&q, &d).unwrap();
        assert_eq!(s, d);
    }

    #[test]
    fn similarity_zero_column_gives_zero_row() {
        let q = mat(&[&[0.0, 1.0], &[0.0, 2.0]]);
        let d = mat(&[&[3.0, -1.0], &[0.5, 2.0]]);
        let s = similarity_matrix(&q, &d).unwrap();
        assert_eq!(s.row(0), &[0.0, 0.0]);
    }

    #[test]
    fn similarity_single_tokens() {
        let q = mat(&[&[1.0], &[1.0]]);
        let d = mat(&[&[2.0], &[3.0]]);
        let s = similarity_matrix(&q, &d).unwrap();
        assert_eq!(s.data(), &[5.0]);
    }

    #[test]
    fn similarity_dimension_mismatch() {
        let q = Matrix::zeros(2, 2);
        let d = Matrix::zeros(3, 2);
        assert!(similarity_matrix(&q, &d).is_err());
    }

    #[test]
    fn de_score_examples() {
        assert_eq!(de_score(&[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(de_score(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(de_score(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), 11.0);
        assert!(de_score(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn colbert_hand_example() {
        assert_eq!(colbert_score(&example_s()), 5.0);
        assert_eq!(colbert_score(&mat(&[&[-2.5]])), -2.5);
    }

    #[test]
    fn topk_examples() {
        let s = example_s();
        assert_eq!(colbert_topk_score(&s, 1).unwrap(), 5.0);
        assert_eq!(colbert_topk_score(&s, 2).unwrap(), 7.0);
        let full: f64 = s.data().iter().sum();
        assert_eq!(colbert_topk_score(&s, 3).unwrap(), full);
        assert!(colbert_topk_score(&s, 0).is_err());
        assert!(colbert_topk_score(&s, 4).is_err());
    }

    #[test]
    fn knrm_default_kernel_grid() {
        let p = KnrmParams::default_config();
        assert_eq!(p.kernels(), 11);
        for i in 0..10 {
            assert!((p.mus[i] - (0.9 - 0.2 * i as f64)).abs() < 1e-15);
            assert_eq!(p.sigmas[i], 0.1);
        }
        assert_eq!(p.mus[10], 1.0);
        assert_eq!(p.sigmas[10], 1e-3);
        assert!(p.validate().is_ok());
    }

    #[test]
    fn knrm_single_entry_exact_values() {
        let p = KnrmParams::default_config();
        let s = mat(&[&[1.0]]);
        let phi = knrm_features(&s, &p).unwrap();
        // Exact-match kernel at mu = 1.0: exp(0) = 1, log 1 = 0.
        assert_eq!(phi[10], 0.0);
        // First kernel, mu = 0.9, sigma = 0.1: log exp(-0.5) = -0.5.
        assert!((phi[0] - (-0.5)).abs() < 1e-15);
    }

    #[test]
    fn knrm_unit_weight_selects_feature() {
        let mut p = KnrmParams::default_config();
        p.w = vec![0.0; p.kernels()];
        p.w[3] = 1.0;
        let s = mat(&[&[0.4, -0.2], &[0.1, 0.9]]);
        let phi = knrm_features(&s, &p).unwrap();
        assert_eq!(knrm_score(&s, &p).unwrap(), phi[3]);
    }

    #[test]
    fn knrm_rejects_bad_params() {
        let mut p = KnrmParams::default_config();
        p.sigmas[0] = 0.0;
        assert!(knrm_score(&example_s(), &p).is_err());
        let mut q = KnrmParams::default_config();
        q.w.pop();
        assert!(knrm_score(&example_s(), &q).is_err());
    }

    #[test]
    fn dispatch_matches_direct_calls() {
        let q = mat(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let d = mat(&[&[1.0, 2.0, 0.0], &[0.0, 1.0, 3.0]]);
        let got = score(&ScorerKind::Colbert, &q, &d, None).unwrap();
        assert_eq!(got, 5.0);

        // Single-column token matrices reduce the DE path to a plain dot.
        let q1 = mat(&[&[1.0], &[2.0]]);
        let d1 = mat(&[&[3.0], &[4.0]]);
        assert_eq!(score(&ScorerKind::De, &q1, &d1, None).unwrap(), 11.0);
    }

    #[test]
    fn dispatch_topk1_equals_colbert_on_random_inputs() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let p = rng.gen_range(2..5);
            let l1 = rng.gen_range(1..5);
            let l2 = rng.gen_range(1..6);
            let q = Matrix::new(
                p,
                l1,
                (0..p * l1).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            )
            .unwrap();
            let d = Matrix::new(
                p,
                l2,
                (0..p * l2).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            )
            .unwrap();
            let a = score(&ScorerKind::Colbert, &q, &d, None).unwrap();
            let b = score(&ScorerKind::ColbertTopK(1), &q, &d, None).unwrap();
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn dispatch_requires_heads() {
        let q = Matrix::identity(2);
        let d = Matrix::identity(2);
        assert!(matches!(
            score(&ScorerKind::Knrm, &q, &d, None),
            Err(Error::MissingHead { .. })
        ));
        let wrong = HeadParams::Knrm(KnrmParams::default_config());
        assert!(matches!(
            score(&ScorerKind::FlatLite, &q, &d, Some(&wrong)),
            Err(Error::WrongHead { .. })
        ));
    }

    #[test]
    fn dot_counter_tracks_similarity_and_de() {
        let counter = DotCounter::new();
        let q = Matrix::zeros(4, 3);
        let d = Matrix::zeros(4, 7);
        let _ = similarity_matrix_counted(&q, &d, Some(&counter)).unwrap();
        assert_eq!(counter.count(), 21);
        counter.reset();
        let _ = de_score_counted(&[1.0, 2.0], &[3.0, 4.0], Some(&counter)).unwrap();
        assert_eq!(counter.count(), 1);
    }

    #[test]
    fn scorer_kind_round_trips_through_strings() {
        for kind in [
            ScorerKind::De,
            ScorerKind::Colbert,
            ScorerKind::ColbertTopK(4),
            ScorerKind::Knrm,
            ScorerKind::FlatLite,
            ScorerKind::SepLite,
        ] {
            let parsed: ScorerKind = kind.to_string().parse().unwrap();
            assert_eq!(parsed, kind);
        }
        assert!("bm25".parse::<ScorerKind>().is_err());
        assert!("topk:0".parse::<ScorerKind>().is_err());
    }
}
