//! Learnable scorer heads and their training machinery.
//!
//! Two heads reduce an `L1 x L2` similarity matrix to a scalar:
//!
//! * **Separable head** ([`SepLiteParams`]): a shared two-layer MLP is
//!   applied to every row of `S`, then a second shared MLP to every column
//!   of the result, then a linear projection. Each MLP layer is
//!   `LN(relu(W x + b))` with parameter-free layer norm.
//! * **Flattened head** ([`FlatLiteParams`]): a two-layer ReLU network on
//!   the row-major flattening of `S`, `a^T relu(W vec(S) + b)`.
//!
//! Both forwards return a cache holding every intermediate the analytic
//! backward pass needs. Backward passes are exact; the test suite checks
//! them against central finite differences.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{dot, matvec, matvec_transpose, Matrix, DEFAULT_LN_EPS};

/// A collection of flat parameter tensors, in a fixed declaration order.
///
/// The order is a contract: the optimizer moment buffers, gradient
/// containers, and the checkpoint format all rely on it.
pub trait ParamSet {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;
}

fn uniform_tensor(rng: &mut ChaCha8Rng, fan_in: usize, len: usize) -> Vec<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    (0..len).map(|_| rng.gen_range(-bound..=bound)).collect()
}

fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let data = uniform_tensor(rng, cols, rows * cols);
    Matrix::new(rows, cols, data).expect("init dims validated by caller")
}

// ---------------------------------------------------------------------------
// Separable head
// ---------------------------------------------------------------------------

/// Parameters of the separable head for an `L1 x L2` similarity matrix.
///
/// Shapes: `w1: m2 x L2`, `w2: L2 x m2`, `w3: m1 x L1`, `w4: L1 x m1`,
/// biases match the output of their layer, and `w` has length `L1 * L2`.
/// The same `(w1, b1, w2, b2)` pair is shared across all rows and the same
/// `(w3, b3, w4, b4)` pair across all columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SepLiteParams {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
    pub w3: Matrix,
    pub b3: Vec<f64>,
    pub w4: Matrix,
    pub b4: Vec<f64>,
    pub w: Vec<f64>,
    pub eps: f64,
}

impl SepLiteParams {
    /// Default hidden widths.
    pub const DEFAULT_M1: usize = 360;
    pub const DEFAULT_M2: usize = 2400;

    /// Deterministic initialization: weights uniform in
    /// `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, biases zero.
    pub fn init(l1: usize, l2: usize, m1: usize, m2: usize, seed: u64) -> Self {
        assert!(l1 >= 1 && l2 >= 1 && m1 >= 1 && m2 >= 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SepLiteParams {
            w1: uniform_matrix(&mut rng, m2, l2),
            b1: vec![0.0; m2],
            w2: uniform_matrix(&mut rng, l2, m2),
            b2: vec![0.0; l2],
            w3: uniform_matrix(&mut rng, m1, l1),
            b3: vec![0.0; m1],
            w4: uniform_matrix(&mut rng, l1, m1),
            b4: vec![0.0; l1],
            w: uniform_tensor(&mut rng, l1 * l2, l1 * l2),
            eps: DEFAULT_LN_EPS,
        }
    }

    /// The reduced-storage profile: 50 document tokens and a 768-wide first
    /// row MLP, with the default column widths.
    pub fn small(l1: usize, seed: u64) -> Self {
        Self::init(l1, 50, Self::DEFAULT_M1, 768, seed)
    }

    pub fn zeros(l1: usize, l2: usize, m1: usize, m2: usize) -> Self {
        SepLiteParams {
            w1: Matrix::zeros(m2, l2),
            b1: vec![0.0; m2],
            w2: Matrix::zeros(l2, m2),
            b2: vec![0.0; l2],
            w3: Matrix::zeros(m1, l1),
            b3: vec![0.0; m1],
            w4: Matrix::zeros(l1, m1),
            b4: vec![0.0; l1],
            w: vec![0.0; l1 * l2],
            eps: DEFAULT_LN_EPS,
        }
    }

    pub fn zeros_like(&self) -> Self {
        let (l1, l2, m1, m2) = self.dims();
        let mut z = Self::zeros(l1, l2, m1, m2);
        z.eps = self.eps;
        z
    }

    /// `(l1, l2, m1, m2)`.
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (
            self.w4.rows(),
            self.w2.rows(),
            self.w3.rows(),
            self.w1.rows(),
        )
    }

    fn check_shapes(&self, s: &Matrix) -> Result<()> {
        let (l1, l2, m1, m2) = self.dims();
        let consistent = self.w1.cols() == l2
            && self.w1.rows() == m2
            && self.b1.len() == m2
            && self.w2.cols() == m2
            && self.b2.len() == l2
            && self.w3.cols() == l1
            && self.b3.len() == m1
            && self.w4.cols() == m1
            && self.b4.len() == l1
            && self.w.len() == l1 * l2;
        if !consistent {
            return Err(Error::InvalidArgument(
                "separable head parameter shapes are internally inconsistent".into(),
            ));
        }
        if s.rows() != l1 || s.cols() != l2 {
            return Err(Error::shape("sep_lite_forward", s.shape(), (l1, l2)));
        }
        Ok(())
    }
}

impl ParamSet for SepLiteParams {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![
            self.w1.data(),
            &self.b1,
            self.w2.data(),
            &self.b2,
            self.w3.data(),
            &self.b3,
            self.w4.data(),
            &self.b4,
            &self.w,
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.w1.data_mut(),
            &mut self.b1,
            self.w2.data_mut(),
            &mut self.b2,
            self.w3.data_mut(),
            &mut self.b3,
            self.w4.data_mut(),
            &mut self.b4,
            &mut self.w,
        ]
    }
}

/// Every intermediate of a separable forward pass, keyed by stage.
///
/// Matrices are laid out so that the row stage lives in rows and the column
/// stage in columns: `z1`/`n1` are `L1 x m2`, `z3`/`n3` are `m1 x L2`.
#[derive(Debug, Clone)]
pub struct SepLiteCache {
    s: Matrix,
    z1: Matrix,
    n1: Matrix,
    inv1: Vec<f64>,
    z2: Matrix,
    s_row: Matrix,
    inv2: Vec<f64>,
    z3: Matrix,
    n3: Matrix,
    inv3: Vec<f64>,
    z4: Matrix,
    s_col: Matrix,
    inv4: Vec<f64>,
}

impl SepLiteCache {
    /// The row-then-column transformed matrix whose flattening feeds the
    /// final projection.
    pub fn transformed(&self) -> &Matrix {
        &self.s_col
    }
}

fn ln_forward(x: &[f64], eps: f64) -> (Vec<f64>, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let inv = 1.0 / (var + eps).sqrt();
    (x.iter().map(|v| (v - mean) * inv).collect(), inv)
}

/// Exact gradient through `y = (x - mean) / sqrt(var + eps)` given the
/// normalized output `y` and `1/sqrt(var + eps)`.
fn ln_backward(g: &[f64], y: &[f64], inv_std: f64) -> Vec<f64> {
    let n = g.len() as f64;
    let g_mean = g.iter().sum::<f64>() / n;
    let gy_mean = g.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / n;
    g.iter()
        .zip(y)
        .map(|(&gi, &yi)| inv_std * (gi - g_mean - yi * gy_mean))
        .collect()
}

fn relu_vec(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v.max(0.0)).collect()
}

fn relu_mask(g: &[f64], z: &[f64]) -> Vec<f64> {
    g.iter()
        .zip(z)
        .map(|(&gi, &zi)| if zi > 0.0 { gi } else { 0.0 })
        .collect()
}

/// Separable forward pass: shared row MLP, shared column MLP, linear
/// projection of the row-major flattening. Returns the score and the cache
/// needed by [`sep_lite_backward`].
pub fn sep_lite_forward(s: &Matrix, p: &SepLiteParams) -> Result<(f64, SepLiteCache)> {
    p.check_shapes(s)?;
    let (l1, l2, m1, m2) = p.dims();

    let mut z1 = Matrix::zeros(l1, m2);
    let mut n1 = Matrix::zeros(l1, m2);
    let mut inv1 = vec![0.0; l1];
    let mut z2 = Matrix::zeros(l1, l2);
    let mut s_row = Matrix::zeros(l1, l2);
    let mut inv2 = vec![0.0; l1];

    for i in 0..l1 {
        let x = s.row(i);
        let mut zi = matvec(&p.w1, x);
        for (z, b) in zi.iter_mut().zip(&p.b1) {
            *z += b;
        }
        let h1 = relu_vec(&zi);
        let (ni, si) = ln_forward(&h1, p.eps);
        let mut z2i = matvec(&p.w2, &ni);
        for (z, b) in z2i.iter_mut().zip(&p.b2) {
            *z += b;
        }
        let h2 = relu_vec(&z2i);
        let (ri, s2) = ln_forward(&h2, p.eps);
        z1.set_row(i, &zi);
        n1.set_row(i, &ni);
        inv1[i] = si;
        z2.set_row(i, &z2i);
        s_row.set_row(i, &ri);
        inv2[i] = s2;
    }

    let mut z3 = Matrix::zeros(m1, l2);
    let mut n3 = Matrix::zeros(m1, l2);
    let mut inv3 = vec![0.0; l2];
    let mut z4 = Matrix::zeros(l1, l2);
    let mut s_col = Matrix::zeros(l1, l2);
    let mut inv4 = vec![0.0; l2];

    for j in 0..l2 {
        let y = s_row.col(j);
        let mut z3j = matvec(&p.w3, &y);
        for (z, b) in z3j.iter_mut().zip(&p.b3) {
            *z += b;
        }
        let h3 = relu_vec(&z3j);
        let (n3j, s3) = ln_forward(&h3, p.eps);
        let mut z4j = matvec(&p.w4, &n3j);
        for (z, b) in z4j.iter_mut().zip(&p.b4) {
            *z += b;
        }
        let h4 = relu_vec(&z4j);
        let (cj, s4) = ln_forward(&h4, p.eps);
        z3.set_col(j, &z3j);
        n3.set_col(j, &n3j);
        inv3[j] = s3;
        z4.set_col(j, &z4j);
        s_col.set_col(j, &cj);
        inv4[j] = s4;
    }

    let score = dot(&p.w, s_col.data());
    Ok((
        score,
        SepLiteCache {
            s: s.clone(),
            z1,
            n1,
            inv1,
            z2,
            s_row,
            inv2,
            z3,
            n3,
            inv3,
            z4,
            s_col,
            inv4,
        },
    ))
}

/// Exact gradients of `upstream * score` with respect to every parameter
/// tensor and the input similarity matrix.
pub fn sep_lite_backward(
    p: &SepLiteParams,
    cache: &SepLiteCache,
    upstream: f64,
) -> Result<(SepLiteParams, Matrix)> {
    let (l1, l2, m1, m2) = p.dims();
    if cache.s.rows() != l1
        || cache.s.cols() != l2
        || cache.z1.cols() != m2
        || cache.z3.rows() != m1
    {
        return Err(Error::CacheMismatch(format!(
            "cache built for {}x{} input does not fit an {}x{} head",
            cache.s.rows(),
            cache.s.cols(),
            l1,
            l2
        )));
    }

    let mut grads = p.zeros_like();
    let mut d_s = Matrix::zeros(l1, l2);

    // Gradient for the final projection and the seed for the column stage.
    for (gw, &sv) in grads.w.iter_mut().zip(cache.s_col.data()) {
        *gw = sv * upstream;
    }
    let mut d_scol = Matrix::zeros(l1, l2);
    for (dv, &wv) in d_scol.data_mut().iter_mut().zip(&p.w) {
        *dv = wv * upstream;
    }

    // Column stage.
    let mut d_srow = Matrix::zeros(l1, l2);
    for j in 0..l2 {
        let dc = d_scol.col(j);
        let dh4 = ln_backward(&dc, &cache.s_col.col(j), cache.inv4[j]);
        let dz4 = relu_mask(&dh4, &cache.z4.col(j));
        let n3j = cache.n3.col(j);
        grads.w4.add_outer(&dz4, &n3j);
        for (b, d) in grads.b4.iter_mut().zip(&dz4) {
            *b += d;
        }
        let dn3 = matvec_transpose(&p.w4, &dz4);
        let dh3 = ln_backward(&dn3, &n3j, cache.inv3[j]);
        let dz3 = relu_mask(&dh3, &cache.z3.col(j));
        let yj = cache.s_row.col(j);
        grads.w3.add_outer(&dz3, &yj);
        for (b, d) in grads.b3.iter_mut().zip(&dz3) {
            *b += d;
        }
        d_srow.set_col(j, &matvec_transpose(&p.w3, &dz3));
    }

    // Row stage.
    for i in 0..l1 {
        let dr = d_srow.row(i).to_vec();
        let dh2 = ln_backward(&dr, cache.s_row.row(i), cache.inv2[i]);
        let dz2 = relu_mask(&dh2, cache.z2.row(i));
        grads.w2.add_outer(&dz2, cache.n1.row(i));
        for (b, d) in grads.b2.iter_mut().zip(&dz2) {
            *b += d;
        }
        let dn1 = matvec_transpose(&p.w2, &dz2);
        let dh1 = ln_backward(&dn1, cache.n1.row(i), cache.inv1[i]);
        let dz1 = relu_mask(&dh1, cache.z1.row(i));
        grads.w1.add_outer(&dz1, cache.s.row(i));
        for (b, d) in grads.b1.iter_mut().zip(&dz1) {
            *b += d;
        }
        d_s.set_row(i, &matvec_transpose(&p.w1, &dz1));
    }

    Ok((grads, d_s))
}

// ---------------------------------------------------------------------------
// Flattened head
// ---------------------------------------------------------------------------

/// Two-layer ReLU network on the row-major flattening of `S`:
/// `score = a^T relu(w vec(S) + b)` with `w: m x n`, `n = L1 * L2`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatLiteParams {
    pub w: Matrix,
    pub b: Vec<f64>,
    pub a: Vec<f64>,
}

impl FlatLiteParams {
    pub fn init(hidden: usize, input: usize, seed: u64) -> Self {
        assert!(hidden >= 1 && input >= 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FlatLiteParams {
            w: uniform_matrix(&mut rng, hidden, input),
            b: vec![0.0; hidden],
            a: uniform_tensor(&mut rng, hidden, hidden),
        }
    }

    pub fn zeros(hidden: usize, input: usize) -> Self {
        FlatLiteParams {
            w: Matrix::zeros(hidden, input),
            b: vec![0.0; hidden],
            a: vec![0.0; hidden],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.hidden(), self.input_len())
    }

    pub fn hidden(&self) -> usize {
        self.w.rows()
    }

    pub fn input_len(&self) -> usize {
        self.w.cols()
    }

    /// A head that reproduces `trace(S)` exactly for any real `S`.
    ///
    /// Each diagonal entry `d` gets a `relu(d) - relu(-d)` pair of hidden
    /// units, so negative diagonals are covered and the identity is exact
    /// in floating point.
    pub fn trace_selector(l1: usize, l2: usize) -> Self {
        let diag = l1.min(l2);
        let n = l1 * l2;
        let mut p = Self::zeros(2 * diag, n);
        for t in 0..diag {
            let idx = t * l2 + t;
            p.w.set(2 * t, idx, 1.0);
            p.a[2 * t] = 1.0;
            p.w.set(2 * t + 1, idx, -1.0);
            p.a[2 * t + 1] = -1.0;
        }
        p
    }
}

impl ParamSet for FlatLiteParams {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![self.w.data(), &self.b, &self.a]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.w.data_mut(), &mut self.b, &mut self.a]
    }
}

#[derive(Debug, Clone)]
pub struct FlatLiteCache {
    input: Vec<f64>,
    z: Vec<f64>,
    h: Vec<f64>,
    shape: (usize, usize),
}

pub fn flat_lite_forward(s: &Matrix, p: &FlatLiteParams) -> Result<(f64, FlatLiteCache)> {
    let n = s.rows() * s.cols();
    if n != p.input_len() {
        return Err(Error::shape(
            "flat_lite_forward",
            s.shape(),
            (p.hidden(), p.input_len()),
        ));
    }
    let input = s.data().to_vec();
    let mut z = matvec(&p.w, &input);
    for (zi, bi) in z.iter_mut().zip(&p.b) {
        *zi += bi;
    }
    let h = relu_vec(&z);
    let score = dot(&p.a, &h);
    Ok((
        score,
        FlatLiteCache {
            input,
            z,
            h,
            shape: s.shape(),
        },
    ))
}

pub fn flat_lite_backward(
    p: &FlatLiteParams,
    cache: &FlatLiteCache,
    upstream: f64,
) -> Result<(FlatLiteParams, Matrix)> {
    if cache.input.len() != p.input_len() || cache.z.len() != p.hidden() {
        return Err(Error::CacheMismatch(format!(
            "cache for input {} / hidden {} does not fit head {}x{}",
            cache.input.len(),
            cache.z.len(),
            p.hidden(),
            p.input_len()
        )));
    }
    let mut grads = p.zeros_like();
    for (ga, &hi) in grads.a.iter_mut().zip(&cache.h) {
        *ga = hi * upstream;
    }
    let dh: Vec<f64> = p.a.iter().map(|&ai| ai * upstream).collect();
    let dz = relu_mask(&dh, &cache.z);
    grads.w.add_outer(&dz, &cache.input);
    grads.b.copy_from_slice(&dz);
    let dv = matvec_transpose(&p.w, &dz);
    let d_s = Matrix::new(cache.shape.0, cache.shape.1, dv)?;
    Ok((grads, d_s))
}

// ---------------------------------------------------------------------------
// AdamW
// ---------------------------------------------------------------------------

/// Optimizer hyperparameters. Defaults are the desk-scale head-training
/// configuration: lr 1e-3, betas (0.9, 0.999), eps 1e-8, weight decay 0.01.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

impl AdamWConfig {
    pub fn validate(&self) -> Result<()> {
        let ok =
            (0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "AdamW requires 0 <= beta < 1 and eps > 0, got beta1={} beta2={} eps={}",
                self.beta1, self.beta2, self.eps
            )))
        }
    }
}

/// AdamW state: step counter plus first/second moment buffers shaped like
/// the parameter set they were created from.
#[derive(Debug, Clone)]
pub struct AdamWState {
    pub config: AdamWConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamWState {
    pub fn new<P: ParamSet>(params: &P, config: AdamWConfig) -> Result<Self> {
        config.validate()?;
        let shapes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
        Ok(AdamWState {
            config,
            step: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One decoupled-weight-decay Adam step with bias correction.
    pub fn step<P: ParamSet>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let g_tensors = grads.tensors();
        let mut p_tensors = params.tensors_mut();
        if p_tensors.len() != self.m.len()
            || p_tensors
                .iter()
                .zip(&self.m)
                .any(|(p, m)| p.len() != m.len())
            || g_tensors.len() != p_tensors.len()
            || g_tensors
                .iter()
                .zip(p_tensors.iter())
                .any(|(g, p)| g.len() != p.len())
        {
            return Err(Error::InvalidArgument(
                "optimizer state, parameters, and gradients must share shapes".into(),
            ));
        }

        self.step += 1;
        let t = self.step as i32;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);

        for ((p, g), (m, v)) in p_tensors
            .iter_mut()
            .zip(&g_tensors)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for i in 0..p.len() {
                p[i] *= 1.0 - c.lr * c.weight_decay;
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
            }
        }
        Ok(())
    }
}

/// Accumulates `other` into `acc`, tensor by tensor.
pub fn accumulate<P: ParamSet>(acc: &mut P, other: &P) {
    let src = other.tensors();
    for (dst, s) in acc.tensors_mut().into_iter().zip(src) {
        for (d, &x) in dst.iter_mut().zip(s) {
            *d += x;
        }
    }
}

/// Scales every tensor of `params` in place.
pub fn scale_params<P: ParamSet>(params: &mut P, factor: f64) {
    for t in params.tensors_mut() {
        for x in t.iter_mut() {
            *x *= factor;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::layer_norm;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Matrix::new(rows, cols, data).unwrap()
    }

    /// Straight-line transcription of the separable head definition, kept
    /// deliberately separate from the production forward pass.
    fn sep_lite_reference(s: &Matrix, p: &SepLiteParams) -> f64 {
        let (l1, l2, _m1, _m2) = p.dims();
        let mut s_prime = Matrix::zeros(l1, l2);
        for i in 0..l1 {
            let x = s.row(i);
            let z1: Vec<f64> = (0..p.w1.rows())
                .map(|r| p.b1[r] + (0..l2).map(|c| p.w1.get(r, c) * x[c]).sum::<f64>())
                .collect();
            let h1: Vec<f64> = z1.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
            let n1 = layer_norm(&h1, p.eps);
            let z2: Vec<f64> = (0..l2)
                .map(|r| {
                    p.b2[r]
                        + (0..p.w2.cols())
                            .map(|c| p.w2.get(r, c) * n1[c])
                            .sum::<f64>()
                })
                .collect();
            let h2: Vec<f64> = z2.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
            s_prime.set_row(i, &layer_norm(&h2, p.eps));
        }
        let mut s_dd = Matrix::zeros(l1, l2);
        for j in 0..l2 {
            let y = s_prime.col(j);
            let z3: Vec<f64> = (0..p.w3.rows())
                .map(|r| p.b3[r] + (0..l1).map(|c| p.w3.get(r, c) * y[c]).sum::<f64>())
                .collect();
            let h3: Vec<f64> = z3.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
            let n3 = layer_norm(&h3, p.eps);
            let z4: Vec<f64> = (0..l1)
                .map(|r| {
                    p.b4[r]
                        + (0..p.w4.cols())
                            .map(|c| p.w4.get(r, c) * n3[c])
                            .sum::<f64>()
                })
                .collect();
            let h4: Vec<f64> = z4.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
            s_dd.set_col(j, &layer_norm(&h4, p.eps));
        }
        let mut score = 0.0;
        for i in 0..l1 {
            for j in 0..l2 {
                score += p.w[i * l2 + j] * s_dd.get(i, j);
            }
        }
        score
    }

    #[test]
    fn sep_forward_zero_params_is_zero() {
        let p = SepLiteParams::zeros(3, 4, 5, 6);
        let s = random_matrix(3, 4, 1);
        let (score, _) = sep_lite_forward(&s, &p).unwrap();
        assert_eq!(score, 0.0);
    }

    #[test]
    fn sep_forward_zero_projection_is_zero() {
        let mut p = SepLiteParams::init(3, 4, 5, 6, 42);
        p.w.iter_mut().for_each(|x| *x = 0.0);
        let s = random_matrix(3, 4, 2);
        let (score, _) = sep_lite_forward(&s, &p).unwrap();
        assert_eq!(score, 0.0);
    }

    #[test]
    fn sep_forward_matches_reference() {
        let p = SepLiteParams::init(2, 2, 4, 5, 0);
        let s = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let (score, _) = sep_lite_forward(&s, &p).unwrap();
        let reference = sep_lite_reference(&s, &p);
        assert!(
            (score - reference).abs() < 1e-12,
            "optimized {score} vs reference {reference}"
        );
        for seed in 1..6u64 {
            let p = SepLiteParams::init(3, 5, 4, 7, seed);
            let s = random_matrix(3, 5, seed + 100);
            let (score, _) = sep_lite_forward(&s, &p).unwrap();
            let reference = sep_lite_reference(&s, &p);
            assert!((score - reference).abs() < 1e-12);
        }
    }

    #[test]
    fn sep_forward_deterministic_bitwise() {
        let p = SepLiteParams::init(3, 4, 5, 6, 3);
        let s = random_matrix(3, 4, 9);
        let (a, _) = sep_lite_forward(&s, &p).unwrap();
        let (b, _) = sep_lite_forward(&s, &p).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn sep_forward_shape_mismatch() {
        let p = SepLiteParams::init(3, 4, 5, 6, 0);
        let s = random_matrix(4, 4, 0);
        assert!(matches!(
            sep_lite_forward(&s, &p),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn sep_backward_zero_upstream() {
        let p = SepLiteParams::init(2, 3, 4, 5, 1);
        let s = random_matrix(2, 3, 1);
        let (_, cache) = sep_lite_forward(&s, &p).unwrap();
        let (grads, ds) = sep_lite_backward(&p, &cache, 0.0).unwrap();
        assert!(grads.tensors().iter().all(|t| t.iter().all(|&x| x == 0.0)));
        assert!(ds.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn sep_backward_final_projection_gradient() {
        let p = SepLiteParams::init(2, 3, 4, 5, 2);
        let s = random_matrix(2, 3, 2);
        let (_, cache) = sep_lite_forward(&s, &p).unwrap();
        let upstream = 1.75;
        let (grads, _) = sep_lite_backward(&p, &cache, upstream).unwrap();
        for (g, &sv) in grads.w.iter().zip(cache.transformed().data()) {
            assert!((g - sv * upstream).abs() < 1e-15);
        }
    }

    #[test]
    fn sep_backward_rejects_mismatched_cache() {
        let p = SepLiteParams::init(2, 3, 4, 5, 2);
        let s = random_matrix(2, 3, 2);
        let (_, cache) = sep_lite_forward(&s, &p).unwrap();
        let other = SepLiteParams::init(3, 3, 4, 5, 2);
        assert!(matches!(
            sep_lite_backward(&other, &cache, 1.0),
            Err(Error::CacheMismatch(_))
        ));
    }

    #[test]
    fn flat_forward_zero_output_weights() {
        let mut p = FlatLiteParams::init(6, 12, 0);
        p.a.iter_mut().for_each(|x| *x = 0.0);
        let s = random_matrix(3, 4, 5);
        let (score, _) = flat_lite_forward(&s, &p).unwrap();
        assert_eq!(score, 0.0);
    }

    #[test]
    fn flat_trace_selector_reproduces_trace() {
        for seed in 0..20u64 {
            let s = random_matrix(4, 4, seed);
            let p = FlatLiteParams::trace_selector(4, 4);
            let (score, _) = flat_lite_forward(&s, &p).unwrap();
            assert!(
                (score - s.trace()).abs() < 1e-12,
                "selector {} vs trace {}",
                score,
                s.trace()
            );
        }
        // Rectangular case.
        let s = random_matrix(3, 5, 77);
        let p = FlatLiteParams::trace_selector(3, 5);
        let (score, _) = flat_lite_forward(&s, &p).unwrap();
        assert!((score - s.trace()).abs() < 1e-12);
    }

    /// Central finite differences on every tensor of a parameter set.
    ///
    /// Gradients below 1e-6 in magnitude are compared absolutely: the
    /// difference quotient itself carries cancellation noise around
    /// `eps * |score| / h` ~ 1e-11, which swamps relative comparison of
    /// near-zero values.
    fn finite_diff_check<P, F>(params: &P, analytic: &P, f: F, h: f64, max_rel: f64)
    where
        P: ParamSet + Clone,
        F: Fn(&P) -> f64,
    {
        let mut probe = params.clone();
        let n_tensors = params.tensors().len();
        for ti in 0..n_tensors {
            for i in 0..params.tensors()[ti].len() {
                let orig = params.tensors()[ti][i];
                probe.tensors_mut()[ti][i] = orig + h;
                let plus = f(&probe);
                probe.tensors_mut()[ti][i] = orig - h;
                let minus = f(&probe);
                probe.tensors_mut()[ti][i] = orig;
                let numeric = (plus - minus) / (2.0 * h);
                let exact = analytic.tensors()[ti][i];
                let denom = exact.abs().max(numeric.abs());
                if denom < 1e-6 {
                    assert!(
                        (exact - numeric).abs() < 1e-8,
                        "tensor {ti} index {i}: near-zero mismatch {exact} vs {numeric}"
                    );
                    continue;
                }
                let rel = (exact - numeric).abs() / denom;
                assert!(
                    rel < max_rel,
                    "tensor {ti} index {i}: analytic {exact} vs numeric {numeric} (rel {rel:e})"
                );
            }
        }
    }

    #[test]
    fn sep_gradients_match_finite_differences() {
        // Hidden widths of at least ~16 keep every ReLU layer alive; an
        // all-dead layer parks the next pre-activation exactly on the kink,
        // where finite differences are meaningless.
        for seed in 0..3u64 {
            let p = SepLiteParams::init(3, 4, 8, 16, seed);
            let s = random_matrix(3, 4, seed + 50);
            let (_, cache) = sep_lite_forward(&s, &p).unwrap();
            let (grads, d_s) = sep_lite_backward(&p, &cache, 1.0).unwrap();
            finite_diff_check(
                &p,
                &grads,
                |q| sep_lite_forward(&s, q).unwrap().0,
                1e-5,
                1e-4,
            );
            // Input gradient via perturbing S.
            let mut s2 = s.clone();
            for i in 0..s.rows() {
                for j in 0..s.cols() {
                    let orig = s.get(i, j);
                    s2.set(i, j, orig + 1e-5);
                    let plus = sep_lite_forward(&s2, &p).unwrap().0;
                    s2.set(i, j, orig - 1e-5);
                    let minus = sep_lite_forward(&s2, &p).unwrap().0;
                    s2.set(i, j, orig);
                    let numeric = (plus - minus) / 2e-5;
                    let exact = d_s.get(i, j);
                    let denom = exact.abs().max(numeric.abs());
                    if denom < 1e-7 {
                        continue;
                    }
                    assert!((exact - numeric).abs() / denom < 1e-4);
                }
            }
        }
    }

    #[test]
    fn flat_gradients_match_finite_differences() {
        for seed in 0..3u64 {
            let p = FlatLiteParams::init(7, 12, seed);
            let s = random_matrix(3, 4, seed + 10);
            let (_, cache) = flat_lite_forward(&s, &p).unwrap();
            let (grads, _) = flat_lite_backward(&p, &cache, 1.0).unwrap();
            finite_diff_check(
                &p,
                &grads,
                |q| flat_lite_forward(&s, q).unwrap().0,
                1e-5,
                1e-4,
            );
        }
    }

    #[test]
    fn small_profile_shapes() {
        let p = SepLiteParams::small(30, 0);
        let (l1, l2, m1, m2) = p.dims();
        assert_eq!((l1, l2, m1, m2), (30, 50, 360, 768));
        assert_eq!(p.w1.shape(), (768, 50));
        let s = Matrix::zeros(30, 50);
        let (score, _) = sep_lite_forward(&s, &p).unwrap();
        assert!(score.is_finite());
    }

    #[test]
    fn init_is_deterministic_and_biases_zero() {
        let a = SepLiteParams::init(3, 4, 5, 6, 123);
        let b = SepLiteParams::init(3, 4, 5, 6, 123);
        assert_eq!(a, b);
        assert!(a.b1.iter().all(|&x| x == 0.0));
        assert!(a.b2.iter().all(|&x| x == 0.0));
        assert!(a.b3.iter().all(|&x| x == 0.0));
        assert!(a.b4.iter().all(|&x| x == 0.0));
        let f = FlatLiteParams::init(4, 9, 7);
        assert!(f.b.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn init_weight_mean_near_zero() {
        // 1e5 draws from U(-a, a) with a = 1/sqrt(fan_in): the sample mean
        // should land within 3 sigma of zero.
        let fan_in = 100usize;
        let n = 100_000usize;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let draws = uniform_tensor(&mut rng, fan_in, n);
        let mean = draws.iter().sum::<f64>() / n as f64;
        let a = 1.0 / (fan_in as f64).sqrt();
        let sigma_mean = a / (3.0f64 * n as f64).sqrt();
        assert!(
            mean.abs() < 3.0 * sigma_mean,
            "mean {mean} vs 3sigma {sigma_mean}"
        );
    }

    #[test]
    fn adamw_zero_grads_zero_decay_leaves_params() {
        let mut p = FlatLiteParams::init(3, 4, 0);
        let snapshot = p.clone();
        let g = p.zeros_like();
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..AdamWConfig::default()
        };
        let mut state = AdamWState::new(&p, cfg).unwrap();
        state.step(&mut p, &g).unwrap();
        assert_eq!(p, snapshot);
    }

    #[test]
    fn adamw_first_step_closed_form() {
        let mut p = FlatLiteParams::init(2, 3, 1);
        let snapshot = p.clone();
        let mut g = p.zeros_like();
        for t in g.tensors_mut() {
            for x in t.iter_mut() {
                *x = 0.25;
            }
        }
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..AdamWConfig::default()
        };
        let mut state = AdamWState::new(&p, cfg).unwrap();
        state.step(&mut p, &g).unwrap();
        let expected_delta = -cfg.lr * 0.25 / (0.25 + cfg.eps);
        for (after, before) in p.tensors().iter().zip(snapshot.tensors()) {
            for (a, b) in after.iter().zip(before) {
                assert!((a - b - expected_delta).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn adamw_decay_shrinks_params_with_zero_grads() {
        let mut p = FlatLiteParams::init(2, 3, 2);
        let snapshot = p.clone();
        let g = p.zeros_like();
        let cfg = AdamWConfig::default(); // weight_decay 0.01
        let mut state = AdamWState::new(&p, cfg).unwrap();
        state.step(&mut p, &g).unwrap();
        let factor = 1.0 - cfg.lr * 0.01;
        for (after, before) in p.tensors().iter().zip(snapshot.tensors()) {
            for (a, b) in after.iter().zip(before) {
                assert!((a - b * factor).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn adamw_rejects_bad_betas() {
        let p = FlatLiteParams::init(2, 3, 0);
        let cfg = AdamWConfig {
            beta1: 1.0,
            ..AdamWConfig::default()
        };
        assert!(AdamWState::new(&p, cfg).is_err());
    }
}
