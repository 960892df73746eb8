//! Fixed-capacity symmetric matrices for the filter covariance.
//!
//! Storage is a stack array sized for the largest model so the filter never
//! allocates per sample.

use crate::error::{Error, Result};
use crate::model::MAX_STATES;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovMatrix {
    data: [[f64; MAX_STATES]; MAX_STATES],
    dim: usize,
}

impl CovMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim <= MAX_STATES, "dimension {dim} exceeds {MAX_STATES}");
        Self { data: [[0.0; MAX_STATES]; MAX_STATES], dim }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.data[i][i] = d;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 || dim > MAX_STATES || rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidArgument(format!("matrix must be square with dim <= {MAX_STATES}")));
        }
        let mut m = Self::zeros(dim);
        for (i, row) in rows.iter().enumerate() {
            m.data[i][..dim].copy_from_slice(row);
        }
        Ok(m)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim).map(|i| self.data[i][..self.dim].to_vec()).collect()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.dim && j < self.dim);
        self.data[i][j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.dim && j < self.dim);
        self.data[i][j] = v;
    }

    pub fn diagonal(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.dim).map(|i| self.data[i][i])
    }

    pub fn is_finite(&self) -> bool {
        (0..self.dim).all(|i| self.data[i][..self.dim].iter().all(|v| v.is_finite()))
    }

    /// Largest `|A_ij - A_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.dim {
            for j in 0..i {
                worst = worst.max((self.data[i][j] - self.data[j][i]).abs());
            }
        }
        worst
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.asymmetry() <= tol
    }

    /// Replaces the matrix by `(A + A^T) / 2`.
    pub fn symmetrize(&mut self) {
        for i in 0..self.dim {
            for j in 0..i {
                let v = 0.5 * (self.data[i][j] + self.data[j][i]);
                self.data[i][j] = v;
                self.data[j][i] = v;
            }
        }
    }

    /// `A h^T` for a row vector `h`.
    pub fn mul_vec(&self, h: &[f64]) -> [f64; MAX_STATES] {
        let mut out = [0.0; MAX_STATES];
        for (i, o) in out.iter_mut().enumerate().take(self.dim) {
            *o = self.data[i][..self.dim].iter().zip(h).map(|(a, b)| a * b).sum();
        }
        out
    }

    /// `h A` for a row vector `h`.
    pub fn vec_mul(&self, h: &[f64]) -> [f64; MAX_STATES] {
        let mut out = [0.0; MAX_STATES];
        for (j, o) in out.iter_mut().enumerate().take(self.dim) {
            *o = (0..self.dim).map(|i| h[i] * self.data[i][j]).sum();
        }
        out
    }

    /// Quadratic form `h A h^T`.
    pub fn quad_form(&self, h: &[f64]) -> f64 {
        let ah = self.mul_vec(h);
        h.iter().zip(&ah[..self.dim]).map(|(a, b)| a * b).sum()
    }

    /// `A <- A - u v^T`.
    pub fn sub_outer(&mut self, u: &[f64], v: &[f64]) {
        for i in 0..self.dim {
            for j in 0..self.dim {
                self.data[i][j] -= u[i] * v[j];
            }
        }
    }

    pub fn add_assign(&mut self, other: &CovMatrix) {
        debug_assert_eq!(self.dim, other.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                self.data[i][j] += other.data[i][j];
            }
        }
    }

    /// Cholesky-based definiteness test. Returns `Some(true)` for positive
    /// definite, `Some(false)` for positive semidefinite, `None` otherwise.
    /// Pivots below `tol * max_diag` count as zero.
    pub fn definiteness(&self, tol: f64) -> Option<bool> {
        let n = self.dim;
        let scale = self.diagonal().fold(0.0f64, |a, d| a.max(d.abs())).max(f64::MIN_POSITIVE);
        let eps = tol * scale;
        let mut l = [[0.0f64; MAX_STATES]; MAX_STATES];
        let mut definite = true;
        for j in 0..n {
            let mut d = self.data[j][j];
            for k in 0..j {
                d -= l[j][k] * l[j][k];
            }
            if d < -eps {
                return None;
            }
            if d <= eps {
                definite = false;
                // Zero pivot: the rest of the column must vanish for PSD.
                for i in (j + 1)..n {
                    let mut s = self.data[i][j];
                    for k in 0..j {
                        s -= l[i][k] * l[j][k];
                    }
                    if s.abs() > eps.sqrt() * scale.sqrt() {
                        return None;
                    }
                }
                continue;
            }
            let ljj = d.sqrt();
            l[j][j] = ljj;
            for i in (j + 1)..n {
                let mut s = self.data[i][j];
                for k in 0..j {
                    s -= l[i][k] * l[j][k];
                }
                l[i][j] = s / ljj;
            }
        }
        Some(definite)
    }
}
