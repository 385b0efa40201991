//! Dense symmetric matrices and Cholesky factorization.

use crate::error::{Error, Result};

/// Square row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= tol))
    }
}

/// Lower-triangular Cholesky factor, row-major with the upper part zeroed.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Matrix,
    jitter: f64,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

fn factor_with(a: &Matrix, jitter: f64) -> Option<Matrix> {
    let n = a.n;
    let mut l = Matrix::zeros(n);
    for i in 0..n {
        for j in 0..=i {
            let (ri, rj) = (i * n, j * n);
            let s = a.get(i, j) - dot(&l.data[ri..ri + j], &l.data[rj..rj + j]);
            if i == j {
                let d = s + jitter;
                if !(d > 0.0) || !d.is_finite() {
                    return None;
                }
                l.data[ri + i] = d.sqrt();
            } else {
                l.data[ri + j] = s / l.data[rj + j];
            }
        }
    }
    Some(l)
}

impl Cholesky {
    /// Factorizes `a`, adding diagonal jitter from 1e-12·trace up to
    /// `max_rel_jitter`·trace (in decades) when the plain factorization fails.
    pub fn new(a: &Matrix, max_rel_jitter: f64) -> Result<Self> {
        if let Some(l) = factor_with(a, 0.0) {
            return Ok(Self { l, jitter: 0.0 });
        }
        let trace = a.trace().abs().max(f64::MIN_POSITIVE);
        let mut rel = 1e-12;
        while rel <= max_rel_jitter * (1.0 + 1e-9) {
            if let Some(l) = factor_with(a, rel * trace) {
                return Ok(Self { l, jitter: rel * trace });
            }
            rel *= 10.0;
        }
        Err(Error::Factorization(format!(
            "{}x{} matrix not positive definite with jitter up to {:e}·trace",
            a.n, a.n, max_rel_jitter
        )))
    }

    pub fn dim(&self) -> usize {
        self.l.n
    }

    /// Absolute diagonal jitter that was needed (0 when none).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn factor(&self) -> &Matrix {
        &self.l
    }

    /// Returns L·z.
    pub fn mul_lower(&self, z: &[f64]) -> Vec<f64> {
        let n = self.l.n;
        assert_eq!(z.len(), n);
        (0..n)
            .map(|i| dot(&self.l.data[i * n..i * n + i + 1], &z[..=i]))
            .collect()
    }
}
