//! Numerical verification of the expressivity gap between dot-product
//! dual encoders and similarity-matrix scorers.
//!
//! The hard scoring function is `trace(X^T Y)` over the binary universe
//! `{0,1}^{P x L}`. Writing `U` for the `2^{PL} x PL` matrix whose rows
//! flatten every universe member, the full score matrix is `K* = U U^T`,
//! and its spectrum follows from `U^T U = 2^{PL-2} (I + J)`: one eigenvalue
//! `2^{PL-2} (PL + 1)` and `PL - 1` eigenvalues `2^{PL-2}`.
//!
//! Any dual encoder with embedding dimension `O` produces a score matrix of
//! rank at most `O`, so its best possible mean squared error against `K*`
//! is the Eckart-Young tail `sum of the squared discarded eigenvalues`
//! divided by `2^{2PL}`. At `O = PL - 1` that floor is exactly `1/16` for
//! every `P` and `L`, while a flattened head reproduces `trace(X^T Y)`
//! itself (see [`FlatLiteParams::trace_selector`]).
//!
//! Everything here recomputes the spectrum numerically from the enumerated
//! universe rather than trusting the closed form; the closed form is what
//! the tests compare against.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fmt;

use crate::error::{Error, Result};
use crate::nn::{flat_lite_forward, FlatLiteParams};
use crate::scorers::{score_matrix, similarity_matrix, HeadParams, ScorerKind};
use crate::tensor::{symmetric_eigenvalues, Matrix, DEFAULT_EIG_TOL};

/// Hard cap on `P * L`: the universe has `2^{PL}` members.
pub const MAX_BITS: usize = 16;

/// The enumerated binary query/document universe for one `(P, L)` choice,
/// with the spectrum of its ground-truth score matrix.
#[derive(Debug, Clone)]
pub struct TheoryInstance {
    pub p: usize,
    pub l: usize,
    /// `2^{PL} x PL` matrix whose row `k` is the flattened member `k`.
    pub universe: Matrix,
    /// Eigenvalues of `U^T U`, descending. These are exactly the nonzero
    /// eigenvalues of `K* = U U^T`.
    pub gram_eigenvalues: Vec<f64>,
}

impl TheoryInstance {
    pub fn bits(&self) -> usize {
        self.p * self.l
    }

    pub fn universe_size(&self) -> usize {
        1usize << self.bits()
    }

    /// Universe member `k` as a `P x L` binary matrix. Entry `(r, c)` is
    /// bit `r * L + c` of `k`, matching the flattening used for `universe`.
    pub fn member(&self, k: usize) -> Matrix {
        assert!(k < self.universe_size());
        let data = (0..self.bits())
            .map(|bit| ((k >> bit) & 1) as f64)
            .collect();
        Matrix::new(self.p, self.l, data).expect("dims validated at construction")
    }

    /// The closed-form spectrum: `2^{PL-2} (PL + 1)` once, `2^{PL-2}` with
    /// multiplicity `PL - 1`.
    pub fn expected_eigenvalues(&self) -> Vec<f64> {
        let bits = self.bits() as i32;
        let base = 2f64.powi(bits - 2);
        let mut expected = vec![base; self.bits()];
        expected[0] = base * (self.bits() as f64 + 1.0);
        expected
    }
}

/// `trace(X^T Y)`: the elementwise dot product of two equal-shape matrices.
pub fn groundtruth_score(x: &Matrix, y: &Matrix) -> Result<f64> {
    if x.shape() != y.shape() {
        return Err(Error::shape("groundtruth_score", x.shape(), y.shape()));
    }
    Ok(x.data().iter().zip(y.data()).map(|(a, b)| a * b).sum())
}

/// Enumerates `{0,1}^{P x L}`, forms `U^T U` by accumulation over the
/// enumerated rows, and eigensolves it.
pub fn build_gram_spectrum(p: usize, l: usize) -> Result<TheoryInstance> {
    if p < 1 || l < 1 {
        return Err(Error::InvalidArgument(
            "universe dimensions must be at least 1".into(),
        ));
    }
    let bits = p * l;
    if bits > MAX_BITS {
        return Err(Error::InvalidArgument(format!(
            "P*L = {bits} exceeds the enumeration cap {MAX_BITS}"
        )));
    }
    let size = 1usize << bits;
    let mut universe = Matrix::zeros(size, bits);
    for k in 0..size {
        for bit in 0..bits {
            universe.set(k, bit, ((k >> bit) & 1) as f64);
        }
    }
    let gram = universe.transpose().matmul(&universe)?;
    let gram_eigenvalues = symmetric_eigenvalues(&gram, DEFAULT_EIG_TOL)?;
    Ok(TheoryInstance {
        p,
        l,
        universe,
        gram_eigenvalues,
    })
}

/// Cross-check path: materializes `K* = U U^T` itself and eigensolves it.
/// Only sensible for `P * L <= 8` (a matrix up to 256 x 256); returns the
/// top `PL` eigenvalues, which should match the gram spectrum.
pub fn direct_score_matrix_eigenvalues(instance: &TheoryInstance) -> Result<Vec<f64>> {
    if instance.bits() > 8 {
        return Err(Error::InvalidArgument(
            "direct score-matrix eigensolve is capped at P*L <= 8".into(),
        ));
    }
    let k_star = instance.universe.matmul(&instance.universe.transpose())?;
    let mut eig = symmetric_eigenvalues(&k_star, DEFAULT_EIG_TOL)?;
    eig.truncate(instance.bits());
    Ok(eig)
}

/// Best achievable normalized mean squared error of any rank-`O` score
/// matrix against `K*`: the squared eigenvalues beyond the top `O`, divided
/// by `2^{2 PL}`. Lower-bounds every `O`-dimensional dual encoder.
pub fn best_rank_o_error(instance: &TheoryInstance, o: usize) -> Result<f64> {
    let bits = instance.bits();
    if o > bits {
        return Err(Error::InvalidArgument(format!(
            "rank {o} out of range, the score matrix has rank {bits}"
        )));
    }
    let tail: f64 = instance.gram_eigenvalues[o..].iter().map(|&x| x * x).sum();
    Ok(tail / 4f64.powi(bits as i32))
}

/// Continuous relaxation of the hard 1/2 threshold: 0 below `1/2 - tau`,
/// 1 above `1/2 + tau`, linear in between.
pub fn phi_tau(z: f64, tau: f64) -> Result<f64> {
    if !(tau > 0.0 && tau <= 0.5) {
        return Err(Error::InvalidArgument(format!(
            "tau must lie in (0, 1/2], got {tau}"
        )));
    }
    Ok(if z <= 0.5 - tau {
        0.0
    } else if z >= 0.5 + tau {
        1.0
    } else {
        0.5 + (z - 0.5) / (2.0 * tau)
    })
}

/// Result of a randomized column-permutation probe of one scorer.
#[derive(Debug, Clone)]
pub struct PermutationReport {
    pub trials: usize,
    pub max_abs_delta: f64,
    /// The first trial exceeding 1e-6, when any: the similarity matrix, the
    /// column permutation, and the score change it produced.
    pub witness: Option<(Matrix, Vec<usize>, f64)>,
}

/// Scores `trials` random similarity matrices before and after a random
/// column permutation and reports the largest change. Sum-max and kernel
/// pooling must come back exactly unchanged; heads that treat columns
/// positionally are expected to produce a witness.
pub fn check_permutation_invariance(
    kind: &ScorerKind,
    head: Option<&HeadParams>,
    l1: usize,
    l2: usize,
    trials: usize,
    seed: u64,
) -> Result<PermutationReport> {
    if !kind.uses_similarity_matrix() {
        return Err(Error::InvalidArgument(
            "permutation probe applies to similarity-matrix scorers".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_abs_delta = 0.0f64;
    let mut witness = None;
    for _ in 0..trials {
        let s = Matrix::new(
            l1,
            l2,
            (0..l1 * l2).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )?;
        let mut perm: Vec<usize> = (0..l2).collect();
        perm.shuffle(&mut rng);
        let mut permuted = Matrix::zeros(l1, l2);
        for (new_j, &old_j) in perm.iter().enumerate() {
            permuted.set_col(new_j, &s.col(old_j));
        }
        let base = score_matrix(kind, &s, head)?;
        let moved = score_matrix(kind, &permuted, head)?;
        let delta = (base - moved).abs();
        if delta > max_abs_delta {
            max_abs_delta = delta;
            if delta > 1e-6 && witness.is_none() {
                witness = Some((s, perm, delta));
            }
        }
    }
    Ok(PermutationReport {
        trials,
        max_abs_delta,
        witness,
    })
}

/// Outcome of the full rank-bound verification for one `(P, L)`.
#[derive(Debug, Clone)]
pub struct RankFloorReport {
    pub p: usize,
    pub l: usize,
    pub eigenvalues: Vec<f64>,
    pub expected_eigenvalues: Vec<f64>,
    pub spectrum_ok: bool,
    /// Normalized error of the best rank-(PL-1) approximation.
    pub rank_error: f64,
    pub rank_error_ok: bool,
    /// Extra rank errors requested by the caller as `(O, error)` pairs.
    pub extra_rank_errors: Vec<(usize, f64)>,
    /// Largest |flattened-head score - trace| over the random contrast pairs.
    pub lite_max_error: f64,
    pub lite_ok: bool,
}

impl RankFloorReport {
    pub fn pass(&self) -> bool {
        self.spectrum_ok && self.rank_error_ok && self.lite_ok
    }
}

impl fmt::Display for RankFloorReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let bits = self.p * self.l;
        writeln!(
            f,
            "rank-bound verification: P={} L={} (PL={}, universe={})",
            self.p,
            self.l,
            bits,
            1usize << bits
        )?;
        let fmt_vals = |vals: &[f64]| {
            vals.iter()
                .map(|v| format!("{v:.9}"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        writeln!(f, "eigenvalues: {}", fmt_vals(&self.eigenvalues))?;
        writeln!(f, "expected:    {}", fmt_vals(&self.expected_eigenvalues))?;
        writeln!(
            f,
            "spectrum match (1e-9 relative): {}",
            if self.spectrum_ok { "PASS" } else { "FAIL" }
        )?;
        writeln!(
            f,
            "best rank-{} normalized error: {:.10} (floor 0.0625000000)",
            bits - 1,
            self.rank_error
        )?;
        writeln!(
            f,
            "rank floor match (1e-9 absolute): {}",
            if self.rank_error_ok { "PASS" } else { "FAIL" }
        )?;
        for &(o, err) in &self.extra_rank_errors {
            writeln!(f, "best rank-{o} normalized error: {err:.10}")?;
        }
        writeln!(
            f,
            "flattened-head max |score - trace| over 1000 pairs: {:.3e}",
            self.lite_max_error
        )?;
        writeln!(
            f,
            "exact trace representation (1e-12): {}",
            if self.lite_ok { "PASS" } else { "FAIL" }
        )?;
        write!(f, "overall: {}", if self.pass() { "PASS" } else { "FAIL" })
    }
}

/// Verifies the spectrum, the 1/16 rank floor, and the flattened-head
/// contrast for one `(P, L)`. Requires `L >= 2` (a single-token side makes
/// the statement vacuous) and `P * L <= 16`.
pub fn verify_rank_floor(p: usize, l: usize) -> Result<RankFloorReport> {
    verify_rank_floor_with(p, l, &[])
}

/// As [`verify_rank_floor`], also reporting `best_rank_o_error` at each
/// requested rank.
pub fn verify_rank_floor_with(
    p: usize,
    l: usize,
    extra_ranks: &[usize],
) -> Result<RankFloorReport> {
    if l < 2 {
        return Err(Error::InvalidArgument(
            "the rank bound needs at least two tokens per side (L >= 2)".into(),
        ));
    }
    let instance = build_gram_spectrum(p, l)?;
    let expected = instance.expected_eigenvalues();
    let spectrum_ok = instance
        .gram_eigenvalues
        .iter()
        .zip(&expected)
        .all(|(got, want)| ((got - want) / want).abs() < 1e-9);

    let bits = instance.bits();
    let rank_error = best_rank_o_error(&instance, bits - 1)?;
    let rank_error_ok = (rank_error - 0.0625).abs() < 1e-9;
    let extra_rank_errors = extra_ranks
        .iter()
        .map(|&o| Ok((o, best_rank_o_error(&instance, o)?)))
        .collect::<Result<Vec<_>>>()?;

    // Contrast: with identity encoders the similarity matrix of a pair is
    // X^T Y, and the diagonal-selector head reads off its trace exactly.
    let selector = FlatLiteParams::trace_selector(l, l);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut lite_max_error = 0.0f64;
    for _ in 0..1000 {
        let x = Matrix::new(p, l, (0..bits).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
        let y = Matrix::new(p, l, (0..bits).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
        let s = similarity_matrix(&x, &y)?;
        let (got, _) = flat_lite_forward(&s, &selector)?;
        let want = groundtruth_score(&x, &y)?;
        lite_max_error = lite_max_error.max((got - want).abs());
    }
    let lite_ok = lite_max_error < 1e-12;

    Ok(RankFloorReport {
        p,
        l,
        eigenvalues: instance.gram_eigenvalues.clone(),
        expected_eigenvalues: expected,
        spectrum_ok,
        rank_error,
        rank_error_ok,
        extra_rank_errors,
        lite_max_error,
        lite_ok,
    })
}
