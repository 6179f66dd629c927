//! Small dense linear-algebra helpers shared by the solvers and certificates.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::seed;

pub(crate) const SVD_EPS: f64 = 1e-15;
pub(crate) const SVD_MAX_ITERS: usize = 10_000;

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> Result<f64> {
    if m.is_empty() {
        return Ok(0.0);
    }
    m.clone()
        .try_svd(false, false, SVD_EPS, SVD_MAX_ITERS)
        .map(|svd| svd.singular_values.max())
        .ok_or_else(|| Error::Numerical("SVD did not converge".into()))
}

pub fn singular_values(m: &DMatrix<f64>) -> Result<DVector<f64>> {
    m.clone()
        .try_svd(false, false, SVD_EPS, SVD_MAX_ITERS)
        .map(|svd| svd.singular_values)
        .ok_or_else(|| Error::Numerical("SVD did not converge".into()))
}

pub fn nuclear_norm(m: &DMatrix<f64>) -> Result<f64> {
    Ok(singular_values(m)?.sum())
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

pub fn l1_norm(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().map(f64::abs).sum()
}

pub fn select_rows(a: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), a.ncols(), |i, j| a[(rows[i], j)])
}

pub fn select_cols(a: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), cols.len(), |i, j| a[(i, cols[j])])
}

pub fn select(a: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| a[(rows[i], cols[j])])
}

pub fn gather(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

/// Indices of `[0, n)` not in `set`, ascending.
pub fn complement(n: usize, set: &[usize]) -> Vec<usize> {
    let mut member = vec![false; n];
    for &i in set {
        member[i] = true;
    }
    (0..n).filter(|&i| !member[i]).collect()
}

/// Orthonormal basis for the columns of a full-column-rank matrix.
pub fn orthonormalize(a: DMatrix<f64>) -> DMatrix<f64> {
    let (rows, cols) = a.shape();
    let q = a.qr().q();
    q.columns(0, cols.min(rows)).into_owned()
}

pub fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = seed::rng(seed);
    // column-major fill, so the draw order is fixed by (rows, cols, seed)
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
}

/// Settings for the power iteration used on matrix-to-matrix operators.
#[derive(Clone, Copy, Debug)]
pub struct PowerIteration {
    pub max_iters: usize,
    pub rel_tol: f64,
}

impl Default for PowerIteration {
    fn default() -> Self {
        PowerIteration {
            max_iters: 200,
            rel_tol: 1e-8,
        }
    }
}

/// Operator norm of a self-adjoint linear map on `rows × cols` matrices
/// (Frobenius inner product), estimated by power iteration from a seeded
/// Gaussian start.
pub fn symmetric_operator_norm(
    shape: (usize, usize),
    op: impl Fn(&DMatrix<f64>) -> DMatrix<f64>,
    settings: PowerIteration,
    seed: u64,
) -> f64 {
    let mut x = gaussian_matrix(shape.0, shape.1, seed);
    let norm = x.norm();
    if norm == 0.0 {
        return 0.0;
    }
    x /= norm;
    let mut estimate = 0.0;
    for _ in 0..settings.max_iters {
        let y = op(&x);
        let next = y.norm();
        if next == 0.0 {
            return 0.0;
        }
        let done = (next - estimate).abs() <= settings.rel_tol * next;
        estimate = next;
        x = y / next;
        if done {
            break;
        }
    }
    estimate
}


/// Lexicographic `k`-subsets of `[0, n)`.
pub struct Combinations {
    n: usize,
    idx: Vec<usize>,
    done: bool,
}

impl Combinations {
    pub fn new(n: usize, k: usize) -> Self {
        Combinations {
            n,
            idx: (0..k).collect(),
            done: k > n,
        }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.idx.clone();
        let k = self.idx.len();
        let mut i = k;
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            if self.idx[i] < self.n - k + i {
                self.idx[i] += 1;
                for j in i + 1..k {
                    self.idx[j] = self.idx[j - 1] + 1;
                }
                break;
            }
        }
        Some(out)
    }
}

/// `C(n, k)` as a float (exact well past the sizes enumerated here).
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[cfg(test)]
mod combination_tests {
    use super::*;

    #[test]
    fn enumerates_all_subsets() {
        let all: Vec<_> = Combinations::new(4, 2).collect();
        assert_eq!(all.len(), 6);
        assert_eq!(all[0], vec![0, 1]);
        assert_eq!(all[5], vec![2, 3]);
        assert_eq!(Combinations::new(3, 0).count(), 1);
        assert_eq!(Combinations::new(2, 3).count(), 0);
        assert_eq!(binomial(10, 3), 120.0);
    }
}
