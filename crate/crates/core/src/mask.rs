//! Entry masks: subsets of `[n1] × [n2]` stored as dense bitmaps.

use nalgebra::DMatrix;

use crate::error::{invalid, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    rows: usize,
    cols: usize,
    // row-major
    bits: Vec<bool>,
}

impl Mask {
    pub fn empty(rows: usize, cols: usize) -> Self {
        Mask {
            rows,
            cols,
            bits: vec![false; rows * cols],
        }
    }

    pub fn full(rows: usize, cols: usize) -> Self {
        Mask {
            rows,
            cols,
            bits: vec![true; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                bits.push(f(i, j));
            }
        }
        Mask { rows, cols, bits }
    }

    pub fn from_indices(
        rows: usize,
        cols: usize,
        indices: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let mut mask = Mask::empty(rows, cols);
        for (i, j) in indices {
            if i >= rows || j >= cols {
                return invalid(format!("mask index ({i}, {j}) outside {rows}x{cols}"));
            }
            mask.insert(i, j);
        }
        Ok(mask)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.cols + j]
    }

    #[inline]
    pub fn insert(&mut self, i: usize, j: usize) {
        self.bits[i * self.cols + j] = true;
    }

    #[inline]
    pub fn remove(&mut self, i: usize, j: usize) {
        self.bits[i * self.cols + j] = false;
    }

    pub fn len(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Member indices in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let cols = self.cols;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(k, _)| (k / cols, k % cols))
    }

    fn zip_with(&self, other: &Mask, f: impl Fn(bool, bool) -> bool) -> Mask {
        assert_eq!(self.shape(), other.shape(), "mask shape mismatch");
        Mask {
            rows: self.rows,
            cols: self.cols,
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn union(&self, other: &Mask) -> Mask {
        self.zip_with(other, |a, b| a || b)
    }

    pub fn intersection(&self, other: &Mask) -> Mask {
        self.zip_with(other, |a, b| a && b)
    }

    /// `self ∖ other`
    pub fn difference(&self, other: &Mask) -> Mask {
        self.zip_with(other, |a, b| a && !b)
    }

    pub fn complement(&self) -> Mask {
        Mask {
            rows: self.rows,
            cols: self.cols,
            bits: self.bits.iter().map(|&b| !b).collect(),
        }
    }

    pub fn is_subset(&self, other: &Mask) -> bool {
        self.shape() == other.shape() && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    /// `P_mask(X)`: keeps the entries of `x` on the mask and zeroes the rest.
    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(x.shape(), self.shape(), "mask/matrix shape mismatch");
        DMatrix::from_fn(self.rows, self.cols, |i, j| {
            if self.contains(i, j) {
                x[(i, j)]
            } else {
                0.0
            }
        })
    }

    /// In-place `P_mask`.
    pub fn apply_mut(&self, x: &mut DMatrix<f64>) {
        assert_eq!(x.shape(), self.shape(), "mask/matrix shape mismatch");
        for j in 0..self.cols {
            for i in 0..self.rows {
                if !self.contains(i, j) {
                    x[(i, j)] = 0.0;
                }
            }
        }
    }

    /// Support of the nonzero entries of a matrix.
    pub fn support_of(x: &DMatrix<f64>) -> Mask {
        Mask::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] != 0.0)
    }
}

/// `pmask_apply` with a shape check.
pub fn pmask_apply(mask: &Mask, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if mask.shape() != x.shape() {
        return invalid(format!(
            "mask is {:?} but matrix is {:?}",
            mask.shape(),
            x.shape()
        ));
    }
    Ok(mask.apply(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_and_empty_masks() {
        let x = DMatrix::from_fn(3, 3, |i, j| (i * 3 + j) as f64 + 1.0);
        assert_eq!(pmask_apply(&Mask::full(3, 3), &x).unwrap(), x);
        assert_eq!(pmask_apply(&Mask::empty(3, 3), &x).unwrap(), DMatrix::zeros(3, 3));
    }

    #[test]
    fn projection_is_idempotent() {
        let x = DMatrix::from_fn(4, 4, |i, j| (i as f64 - j as f64).sin());
        let m = Mask::from_fn(4, 4, |i, j| (i + 2 * j) % 3 == 0);
        let once = m.apply(&x);
        assert_eq!(m.apply(&once), once);
    }

    #[test]
    fn set_algebra() {
        let a = Mask::from_indices(2, 2, [(0, 0), (0, 1)]).unwrap();
        let b = Mask::from_indices(2, 2, [(0, 1), (1, 1)]).unwrap();
        assert_eq!(a.union(&b).len(), 3);
        assert_eq!(a.intersection(&b).iter().collect::<Vec<_>>(), vec![(0, 1)]);
        assert_eq!(a.difference(&b).iter().collect::<Vec<_>>(), vec![(0, 0)]);
        assert!(a.difference(&b).is_subset(&a));
        assert!(Mask::from_indices(2, 2, [(2, 0)]).is_err());
    }
}
