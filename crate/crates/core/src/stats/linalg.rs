//! Dense row-major matrices and a Householder QR factorization, sized for
//! the small design matrices used by the audit regressions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::invalid("ragged matrix rows"));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Thin QR factorization `A = Q R` with `Q` (n×p) having orthonormal
/// columns and `R` (p×p) upper triangular.
#[derive(Debug, Clone)]
pub struct Qr {
    q: Matrix,
    r: Matrix,
}

impl Qr {
    /// Householder factorization. Fails when `A` is rank deficient
    /// relative to machine precision.
    pub fn new(a: &Matrix) -> Result<Self> {
        let (n, p) = (a.rows, a.cols);
        if n < p {
            return Err(Error::invalid(format!(
                "QR needs at least as many rows as columns ({n} < {p})"
            )));
        }
        let mut work = a.clone();
        let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(p);

        for k in 0..p {
            let norm = (k..n).map(|i| work.get(i, k).powi(2)).sum::<f64>().sqrt();
            let mut v: Vec<f64> = (k..n).map(|i| work.get(i, k)).collect();
            if norm == 0.0 {
                reflectors.push(vec![0.0; n - k]);
                continue;
            }
            let alpha = if v[0] >= 0.0 { -norm } else { norm };
            v[0] -= alpha;
            let vnorm2: f64 = v.iter().map(|x| x * x).sum();
            if vnorm2 > 0.0 {
                for j in k..p {
                    let dot: f64 = (k..n).map(|i| v[i - k] * work.get(i, j)).sum();
                    let scale = 2.0 * dot / vnorm2;
                    for i in k..n {
                        let val = work.get(i, j) - scale * v[i - k];
                        work.set(i, j, val);
                    }
                }
            }
            reflectors.push(v);
        }

        let mut r = Matrix::zeros(p, p);
        for i in 0..p {
            for j in i..p {
                r.set(i, j, work.get(i, j));
            }
        }

        let max_diag = (0..p).map(|i| r.get(i, i).abs()).fold(0.0, f64::max);
        let min_diag = (0..p).map(|i| r.get(i, i).abs()).fold(f64::INFINITY, f64::min);
        let tol = f64::EPSILON * n.max(p) as f64 * max_diag;
        if p > 0 && (max_diag == 0.0 || min_diag <= tol) {
            let condition = if min_diag == 0.0 {
                f64::INFINITY
            } else {
                max_diag / min_diag
            };
            return Err(Error::Singular { condition });
        }

        // Q = H_0 H_1 ... H_{p-1} applied to the first p unit vectors.
        let mut q = Matrix::zeros(n, p);
        for j in 0..p {
            q.set(j, j, 1.0);
        }
        for k in (0..p).rev() {
            let v = &reflectors[k];
            let vnorm2: f64 = v.iter().map(|x| x * x).sum();
            if vnorm2 == 0.0 {
                continue;
            }
            for j in 0..p {
                let dot: f64 = (k..n).map(|i| v[i - k] * q.get(i, j)).sum();
                let scale = 2.0 * dot / vnorm2;
                for i in k..n {
                    let val = q.get(i, j) - scale * v[i - k];
                    q.set(i, j, val);
                }
            }
        }

        Ok(Self { q, r })
    }

    pub fn q(&self) -> &Matrix {
        &self.q
    }

    pub fn r(&self) -> &Matrix {
        &self.r
    }

    /// `max |r_ii| / min |r_ii|`, a cheap lower bound on the 2-norm condition number.
    pub fn condition_estimate(&self) -> f64 {
        let diag = (0..self.r.cols).map(|i| self.r.get(i, i).abs());
        let max = diag.clone().fold(0.0, f64::max);
        let min = diag.fold(f64::INFINITY, f64::min);
        max / min
    }

    /// `Qᵀ b`, length p.
    pub fn qt_mul(&self, b: &[f64]) -> Vec<f64> {
        let (n, p) = (self.q.rows, self.q.cols);
        let mut out = vec![0.0; p];
        for i in 0..n {
            let row = self.q.row(i);
            let bi = b[i];
            for j in 0..p {
                out[j] += row[j] * bi;
            }
        }
        out
    }

    /// Least-squares solution of `A x ≈ b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let c = self.qt_mul(b);
        back_substitute(&self.r, &c)
    }

    /// `(AᵀA)⁻¹ = R⁻¹ R⁻ᵀ`.
    pub fn gram_inverse(&self) -> Matrix {
        let p = self.r.cols;
        let mut rinv = Matrix::zeros(p, p);
        for j in 0..p {
            let mut e = vec![0.0; p];
            e[j] = 1.0;
            let col = back_substitute(&self.r, &e);
            for (i, v) in col.into_iter().enumerate() {
                rinv.set(i, j, v);
            }
        }
        let mut out = Matrix::zeros(p, p);
        for i in 0..p {
            for j in 0..p {
                let s: f64 = (0..p).map(|k| rinv.get(i, k) * rinv.get(j, k)).sum();
                out.set(i, j, s);
            }
        }
        out
    }
}

fn back_substitute(r: &Matrix, c: &[f64]) -> Vec<f64> {
    let p = r.cols;
    let mut x = vec![0.0; p];
    for i in (0..p).rev() {
        let s: f64 = ((i + 1)..p).map(|j| r.get(i, j) * x[j]).sum();
        x[i] = (c[i] - s) / r.get(i, i);
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qr_reconstructs_input() {
        let a = Matrix::from_rows(&[
            vec![1.0, 2.0, 0.5],
            vec![1.0, -1.0, 3.0],
            vec![1.0, 0.0, -2.0],
            vec![1.0, 4.0, 1.0],
        ])
        .unwrap();
        let qr = Qr::new(&a).unwrap();
        for i in 0..4 {
            for j in 0..3 {
                let v: f64 = (0..3).map(|k| qr.q().get(i, k) * qr.r().get(k, j)).sum();
                assert!((v - a.get(i, j)).abs() < 1e-12);
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                let d: f64 = (0..4).map(|k| qr.q().get(k, i) * qr.q().get(k, j)).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((d - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn collinear_columns_are_singular() {
        let a = Matrix::from_rows(&[
            vec![1.0, 2.0],
            vec![1.0, 2.0],
            vec![1.0, 2.0],
        ])
        .unwrap();
        assert!(matches!(Qr::new(&a), Err(Error::Singular { .. })));
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(Matrix::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }
}
