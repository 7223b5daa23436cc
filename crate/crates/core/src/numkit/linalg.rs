//! Householder QR for least squares and Cholesky for symmetric positive-definite solves.

use super::matrix::{dot, Matrix};
use crate::error::{Error, Result};

/// Relative rank tolerance: a factorization is rejected when its smallest
/// pivot magnitude falls below this fraction of the largest.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Householder QR factorization of a tall design matrix, reusable across
/// right-hand sides. Solving `X θ ≈ y` never forms `(XᵀX)⁻¹`.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    rows: usize,
    cols: usize,
    /// Householder vectors; `reflectors[k]` acts on rows `k..rows`.
    reflectors: Vec<Vec<f64>>,
    /// Upper-triangular factor, row-major `cols x cols`.
    r: Vec<f64>,
}

impl LeastSquares {
    pub fn new(x: &Matrix) -> Result<Self> {
        let (n, d) = x.shape();
        if n < d {
            return Err(Error::dims(format!(
                "least squares needs rows >= cols, got {n}x{d}"
            )));
        }
        if d == 0 {
            return Err(Error::dims("design matrix has no columns"));
        }
        // Column-major working copy keeps each reflector application contiguous.
        let mut cols: Vec<Vec<f64>> = (0..d).map(|j| x.column(j)).collect();
        let mut reflectors = Vec::with_capacity(d);
        let mut r = vec![0.0; d * d];

        for k in 0..d {
            let tail = &cols[k][k..];
            let norm = dot(tail, tail).sqrt();
            let alpha = if tail[0] > 0.0 { -norm } else { norm };
            let mut v = tail.to_vec();
            v[0] -= alpha;
            let vnorm2 = dot(&v, &v);
            if vnorm2 > 0.0 {
                for col in cols.iter_mut().skip(k) {
                    let seg = &mut col[k..];
                    let s = 2.0 * dot(&v, seg) / vnorm2;
                    for (c, vi) in seg.iter_mut().zip(&v) {
                        *c -= s * vi;
                    }
                }
            }
            for (j, col) in cols.iter().enumerate().skip(k) {
                r[k * d + j] = col[k];
            }
            r[k * d + k] = alpha;
            reflectors.push(v);
        }

        let diag: Vec<f64> = (0..d).map(|k| r[k * d + k].abs()).collect();
        let max = diag.iter().cloned().fold(0.0, f64::max);
        let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(max > 0.0) || min <= RANK_TOLERANCE * max {
            return Err(Error::SingularDesign {
                condition: if min > 0.0 { max / min } else { f64::INFINITY },
            });
        }
        Ok(Self {
            rows: n,
            cols: d,
            reflectors,
            r,
        })
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Minimizer of `‖Xθ − y‖²`.
    pub fn solve(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.rows {
            return Err(Error::dims(format!(
                "target has length {}, design has {} rows",
                y.len(),
                self.rows
            )));
        }
        let mut qty = y.to_vec();
        for (k, v) in self.reflectors.iter().enumerate() {
            let vnorm2 = dot(v, v);
            if vnorm2 == 0.0 {
                continue;
            }
            let seg = &mut qty[k..];
            let s = 2.0 * dot(v, seg) / vnorm2;
            for (c, vi) in seg.iter_mut().zip(v) {
                *c -= s * vi;
            }
        }
        qty.truncate(self.cols);
        Ok(self.back_substitute(qty))
    }

    /// Solves `R θ = b` in place.
    fn back_substitute(&self, mut b: Vec<f64>) -> Vec<f64> {
        let d = self.cols;
        for i in (0..d).rev() {
            let mut s = b[i];
            for j in i + 1..d {
                s -= self.r[i * d + j] * b[j];
            }
            b[i] = s / self.r[i * d + i];
        }
        b
    }

    /// Solves `Rᵀ z = b` (forward substitution).
    fn forward_substitute_rt(&self, mut b: Vec<f64>) -> Vec<f64> {
        let d = self.cols;
        for i in 0..d {
            let mut s = b[i];
            for j in 0..i {
                s -= self.r[j * d + i] * b[j];
            }
            b[i] = s / self.r[i * d + i];
        }
        b
    }

    /// `(XᵀX)⁻¹ b` computed as `R⁻¹ R⁻ᵀ b`.
    pub fn gram_inverse_apply(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.cols {
            return Err(Error::dims("vector length differs from feature dimension"));
        }
        Ok(self.back_substitute(self.forward_substitute_rt(b.to_vec())))
    }

    /// Quadratic form `xᵀ (XᵀX)⁻¹ x = ‖R⁻ᵀ x‖²`.
    pub fn gram_inverse_quad(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.cols {
            return Err(Error::dims("vector length differs from feature dimension"));
        }
        let z = self.forward_substitute_rt(x.to_vec());
        Ok(dot(&z, &z))
    }

    /// Explicit `(XᵀX)⁻¹`, assembled column by column from triangular solves.
    pub fn gram_inverse(&self) -> Matrix {
        let d = self.cols;
        let mut out = Matrix::zeros(d, d);
        for j in 0..d {
            let mut e = vec![0.0; d];
            e[j] = 1.0;
            let col = self.back_substitute(self.forward_substitute_rt(e));
            for (i, v) in col.into_iter().enumerate() {
                out[(i, j)] = v;
            }
        }
        out
    }
}

/// Least-squares coefficients `argmin ‖Xθ − y‖²`.
pub fn solve_least_squares(x: &Matrix, y: &[f64]) -> Result<Vec<f64>> {
    if y.len() != x.rows() {
        return Err(Error::dims(format!(
            "target has length {}, design has {} rows",
            y.len(),
            x.rows()
        )));
    }
    LeastSquares::new(x)?.solve(y)
}

/// Cholesky factor `L` of a symmetric positive-definite matrix (`A = L Lᵀ`).
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    pub fn new(a: &Matrix) -> Result<Self> {
        let (n, m) = a.shape();
        if n != m {
            return Err(Error::dims(format!("Cholesky needs a square matrix, got {n}x{m}")));
        }
        let max_diag = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max);
        let mut l = vec![0.0; n * n];
        let mut min_pivot = f64::INFINITY;
        for j in 0..n {
            let mut s = a[(j, j)];
            for k in 0..j {
                s -= l[j * n + k] * l[j * n + k];
            }
            if !(s > RANK_TOLERANCE * max_diag) {
                return Err(Error::SingularDesign {
                    condition: if s > 0.0 { max_diag / s } else { f64::INFINITY },
                });
            }
            min_pivot = min_pivot.min(s);
            let ljj = s.sqrt();
            l[j * n + j] = ljj;
            for i in j + 1..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / ljj;
            }
        }
        Ok(Self { n, l })
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        if b.len() != n {
            return Err(Error::dims("right-hand side length differs from matrix order"));
        }
        let mut z = self.forward(b.to_vec());
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in i + 1..n {
                s -= self.l[k * n + i] * z[k];
            }
            z[i] = s / self.l[i * n + i];
        }
        Ok(z)
    }

    fn forward(&self, mut b: Vec<f64>) -> Vec<f64> {
        let n = self.n;
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= self.l[i * n + k] * b[k];
            }
            b[i] = s / self.l[i * n + i];
        }
        b
    }

    /// `bᵀ A⁻¹ b = ‖L⁻¹ b‖²`.
    pub fn inverse_quad(&self, b: &[f64]) -> Result<f64> {
        if b.len() != self.n {
            return Err(Error::dims("vector length differs from matrix order"));
        }
        let z = self.forward(b.to_vec());
        Ok(dot(&z, &z))
    }
}
