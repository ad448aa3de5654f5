//! Small dense linear algebra used by the Newton solvers.

use crate::error::{Error, Result};

/// Row-major square matrix.
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

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), n, "matrix must be square");
            m.data[i * n..(i + 1) * n].copy_from_slice(r);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, x: f64) {
        self.data[i * self.n + j] = x;
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, x: f64) {
        self.data[i * self.n + j] += x;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn fill(&mut self, x: f64) {
        self.data.fill(x);
    }

    /// Multiplies column `j` by `s[j]`, i.e. `A * diag(s)`.
    pub fn scale_columns(&mut self, s: &[f64]) {
        for row in self.data.chunks_exact_mut(self.n) {
            for (a, f) in row.iter_mut().zip(s) {
                *a *= f;
            }
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.data
            .chunks_exact(self.n)
            .map(|r| r.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting. `a` and
/// `b` are overwritten; the solution is left in `b`.
pub fn solve_in_place(a: &mut Matrix, b: &mut [f64]) -> Result<()> {
    let n = a.n;
    assert_eq!(b.len(), n);
    for k in 0..n {
        let (p, pmax) = (k..n)
            .map(|i| (i, a.get(i, k).abs()))
            .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if pmax == 0.0 || !pmax.is_finite() {
            return Err(Error::Singular { pivot: k });
        }
        if p != k {
            for j in 0..n {
                a.data.swap(k * n + j, p * n + j);
            }
            b.swap(k, p);
        }
        let pivot = a.get(k, k);
        for i in k + 1..n {
            let f = a.get(i, k) / pivot;
            if f == 0.0 {
                continue;
            }
            a.set(i, k, 0.0);
            for j in k + 1..n {
                let akj = a.data[k * n + j];
                a.data[i * n + j] -= f * akj;
            }
            b[i] -= f * b[k];
        }
    }
    for k in (0..n).rev() {
        let mut acc = b[k];
        for j in k + 1..n {
            acc -= a.get(k, j) * b[j];
        }
        b[k] = acc / a.get(k, k);
    }
    Ok(())
}

pub fn norm_inf(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_with_pivoting() {
        let mut a = Matrix::from_rows(&[
            vec![0.0, 2.0, 1.0],
            vec![1.0, 1.0, 0.0],
            vec![3.0, 0.0, 1.0],
        ]);
        let orig = a.clone();
        let x = [1.0, -2.0, 0.5];
        let mut b = orig.mul_vec(&x);
        solve_in_place(&mut a, &mut b).unwrap();
        for (u, v) in b.iter().zip(&x) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn detects_singular() {
        let mut a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        let mut b = vec![1.0, 1.0];
        assert!(matches!(
            solve_in_place(&mut a, &mut b),
            Err(Error::Singular { pivot: 1 })
        ));
    }
}
