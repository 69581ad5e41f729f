//! Minimal dense linear algebra used by every other module: a row-major
//! `f64` matrix, multiplication, ReLU, layer normalization, and a cyclic
//! Jacobi eigensolver for small symmetric matrices.
//!
//! All values are immutable after construction and safe to share across
//! threads; nothing here locks or allocates globally.

use crate::error::{Error, Result};

/// Layer-norm epsilon used everywhere a default is needed.
pub const DEFAULT_LN_EPS: f64 = 1e-5;

/// Default convergence tolerance for [`symmetric_eigenvalues`].
pub const DEFAULT_EIG_TOL: f64 = 1e-12;

/// Dense row-major matrix of `f64` values. Always at least 1x1.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major data. Fails if the dimensions are
    /// degenerate or the buffer length does not match `rows * cols`.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::EmptyMatrix { rows, cols });
        }
        let expected = rows * cols;
        if data.len() != expected {
            return Err(Error::DataLength {
                rows,
                cols,
                expected,
                got: data.len(),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    /// All-zeros matrix. Panics on degenerate dimensions; use [`Matrix::new`]
    /// when the dimensions come from untrusted input.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "matrix must be at least 1x1");
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Identity matrix of order `n`.
    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyMatrix { rows: 0, cols: 0 });
        }
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DataLength {
                    rows: rows.len(),
                    cols,
                    expected: rows.len() * cols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Matrix::new(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] = v;
    }

    /// Borrow row `i` as a contiguous slice.
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        debug_assert!(i < self.rows);
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Copy column `j` into a fresh vector.
    pub fn col(&self, j: usize) -> Vec<f64> {
        debug_assert!(j < self.cols);
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn set_col(&mut self, j: usize, v: &[f64]) {
        assert_eq!(v.len(), self.rows, "column length mismatch");
        for (i, &x) in v.iter().enumerate() {
            self.set(i, j, x);
        }
    }

    pub fn set_row(&mut self, i: usize, v: &[f64]) {
        assert_eq!(v.len(), self.cols, "row length mismatch");
        self.data[i * self.cols..(i + 1) * self.cols].copy_from_slice(v);
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j));
            }
        }
        out
    }

    /// Standard matrix product `self * other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::shape("matmul", self.shape(), other.shape()));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                let src = other.row(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, &b) in dst.iter_mut().zip(src) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    /// Elementwise `max(0, x)`.
    pub fn relu(&self) -> Matrix {
        self.map(|x| x.max(0.0))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Matrix {
        self.map(|x| x * s)
    }

    pub fn trace(&self) -> f64 {
        let n = self.rows.min(self.cols);
        (0..n).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Accumulates the outer product `u * v^T` into `self`.
    pub fn add_outer(&mut self, u: &[f64], v: &[f64]) {
        assert_eq!(u.len(), self.rows, "outer product row mismatch");
        assert_eq!(v.len(), self.cols, "outer product col mismatch");
        for (i, &ui) in u.iter().enumerate() {
            if ui == 0.0 {
                continue;
            }
            let dst = &mut self.data[i * self.cols..(i + 1) * self.cols];
            for (d, &vj) in dst.iter_mut().zip(v) {
                *d += ui * vj;
            }
        }
    }

    /// Mean of the columns: the pooled vector of a `P x L` token matrix.
    pub fn col_mean(&self) -> Vec<f64> {
        let inv = 1.0 / self.cols as f64;
        (0..self.rows)
            .map(|i| self.row(i).iter().sum::<f64>() * inv)
            .collect()
    }
}

/// `m * x` for a vector `x` of length `m.cols()`.
pub fn matvec(m: &Matrix, x: &[f64]) -> Vec<f64> {
    assert_eq!(x.len(), m.cols(), "matvec dimension mismatch");
    (0..m.rows())
        .map(|i| m.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

/// `m^T * x` for a vector `x` of length `m.rows()`.
pub fn matvec_transpose(m: &Matrix, x: &[f64]) -> Vec<f64> {
    assert_eq!(x.len(), m.rows(), "matvec dimension mismatch");
    let mut out = vec![0.0; m.cols()];
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        for (o, &a) in out.iter_mut().zip(m.row(i)) {
            *o += xi * a;
        }
    }
    out
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Normalizes `v` to zero mean and unit population variance:
/// `(v - mean) / sqrt(var + eps)`. No learnable gain or bias.
pub fn layer_norm(v: &[f64], eps: f64) -> Vec<f64> {
    assert!(!v.is_empty(), "layer_norm input must be nonempty");
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let inv = 1.0 / (var + eps).sqrt();
    v.iter().map(|x| (x - mean) * inv).collect()
}

/// All eigenvalues of a symmetric matrix, sorted descending, via cyclic
/// Jacobi rotations.
///
/// `tol` controls both the symmetry check on the input and convergence:
/// sweeps stop once every off-diagonal magnitude drops below
/// `tol * max(1, ||m||_F)`. The scale factor keeps the criterion meaningful
/// for matrices with large entries, where an absolute threshold below the
/// rounding floor would never be reached.
pub fn symmetric_eigenvalues(m: &Matrix, tol: f64) -> Result<Vec<f64>> {
    let n = m.rows();
    if m.rows() != m.cols() {
        return Err(Error::NotSquare {
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    let scale = m.frobenius_norm().max(1.0);
    let mut max_asym = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            max_asym = max_asym.max((m.get(i, j) - m.get(j, i)).abs());
        }
    }
    if max_asym > tol * scale {
        return Err(Error::NotSymmetric {
            max_asymmetry: max_asym,
            tol: tol * scale,
        });
    }

    if n == 1 {
        return Ok(vec![m.get(0, 0)]);
    }

    // Work on a symmetrized copy.
    let mut a = m.clone();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a.get(i, j) + a.get(j, i));
            a.set(i, j, v);
            a.set(j, i, v);
        }
    }

    let thresh = tol * scale;
    const MAX_SWEEPS: usize = 100;
    for _ in 0..MAX_SWEEPS {
        let mut off_max = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                off_max = off_max.max(a.get(i, j).abs());
            }
        }
        if off_max < thresh {
            let mut eig: Vec<f64> = (0..n).map(|i| a.get(i, i)).collect();
            eig.sort_by(|x, y| y.total_cmp(x));
            return Ok(eig);
        }
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq.abs() < thresh * 1e-3 {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                let theta = 0.5 * (aqq - app) / apq;
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                a.set(p, p, app - t * apq);
                a.set(q, q, aqq + t * apq);
                a.set(p, q, 0.0);
                a.set(q, p, 0.0);
                for i in 0..n {
                    if i == p || i == q {
                        continue;
                    }
                    let aip = a.get(i, p);
                    let aiq = a.get(i, q);
                    let new_p = c * aip - s * aiq;
                    let new_q = s * aip + c * aiq;
                    a.set(i, p, new_p);
                    a.set(p, i, new_p);
                    a.set(i, q, new_q);
                    a.set(q, i, new_q);
                }
            }
        }
    }
    Err(Error::InvalidArgument(format!(
        "jacobi eigensolver did not converge in {MAX_SWEEPS} sweeps for a {n}x{n} matrix"
    )))
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    fn arb_matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
        proptest::collection::vec(-1.0f64..1.0, rows * cols)
            .prop_map(move |data| Matrix::new(rows, cols, data).unwrap())
    }

    proptest! {
        /// (AB)C == A(BC) within 1e-9 relative error.
        #[test]
        fn matmul_associative(
            a in arb_matrix(3, 4),
            b in arb_matrix(4, 2),
            c in arb_matrix(2, 5),
        ) {
            let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
            let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
            for (x, y) in left.data().iter().zip(right.data()) {
                let denom = x.abs().max(y.abs()).max(1.0);
                prop_assert!((x - y).abs() / denom < 1e-9);
            }
        }

        /// layer_norm output has zero mean; unit variance when eps = 0 and
        /// the input is not constant.
        #[test]
        fn layer_norm_moments(v in proptest::collection::vec(-10.0f64..10.0, 2..32)) {
            let out = layer_norm(&v, 0.0);
            let n = out.len() as f64;
            let mean = out.iter().sum::<f64>() / n;
            prop_assert!(mean.abs() < 1e-9);
            let constant = v.iter().all(|&x| x == v[0]);
            if !constant {
                let var = out.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
                prop_assert!((var - 1.0).abs() < 1e-9);
            }
        }
    }
}
