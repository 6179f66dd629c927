use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result};
use crate::linalg::{self, PowerIteration};
use crate::mask::Mask;
use crate::proxops::TangentProjector;
use crate::seed;

/// `√m + √n + t`.
pub fn gaussian_norm_bound(m: usize, n: usize, t: f64) -> f64 {
    (m as f64).sqrt() + (n as f64).sqrt() + t
}

/// Fraction of standard normal `m × n` draws with `‖B‖ ≤ √m + √n + t`.
pub fn spectral_check_gaussian(m: usize, n: usize, t: f64, trials: usize, seed: u64) -> Result<f64> {
    if trials == 0 {
        return invalid("trials must be at least 1");
    }
    let bound = gaussian_norm_bound(m, n, t);
    let mut pass = 0;
    for k in 0..trials {
        let b = linalg::gaussian_matrix(m, n, seed::derive(seed, &[k as u64]));
        if linalg::spectral_norm(&b)? <= bound {
            pass += 1;
        }
    }
    Ok(pass as f64 / trials as f64)
}

#[derive(Clone, Debug)]
pub enum RowCheck {
    /// `‖A_{:,T}ᵀA_{:,T} − I‖`.
    Gram,
    /// `‖A_{:,Tᶜ}ᵀA_{:,T}v‖_∞ √s / ‖v‖₂`.
    CrossVec(DVector<f64>),
    /// `max_{i ∈ Tᶜ} ‖A_{:,T}ᵀA_{:,i}‖₂`.
    CrossCol,
}

pub fn spectral_check_rows(a: &DMatrix<f64>, t: &[usize], mode: &RowCheck) -> Result<f64> {
    let n = a.ncols();
    if let Some(&i) = t.iter().find(|&&i| i >= n) {
        return invalid(format!("support index {i} out of range 0..{n}"));
    }
    let at = linalg::select_cols(a, t);
    let tc = linalg::complement(n, t);
    match mode {
        RowCheck::Gram => {
            if t.is_empty() {
                return Ok(0.0);
            }
            let dev = at.transpose() * &at - DMatrix::identity(t.len(), t.len());
            linalg::spectral_norm(&dev)
        }
        RowCheck::CrossVec(v) => {
            if t.is_empty() {
                return invalid("cross-vector check needs a nonempty support");
            }
            if v.len() != t.len() {
                return invalid(format!("v has length {}, support has {}", v.len(), t.len()));
            }
            let norm = v.norm();
            if norm == 0.0 {
                return invalid("cross-vector check needs a nonzero v");
            }
            let w = &at * v;
            let worst = tc.iter().map(|&i| a.column(i).dot(&w).abs()).fold(0.0, f64::max);
            Ok(worst * (t.len() as f64).sqrt() / norm)
        }
        RowCheck::CrossCol => {
            let atr = at.transpose();
            Ok(tc.iter().map(|&i| (&atr * a.column(i)).norm()).fold(0.0, f64::max))
        }
    }
}

/// `‖P_T − ρ₀⁻¹ P_T P_{Ω₀} P_T‖` over the matrix space, by power iteration.
pub fn tangent_deviation(tp: &TangentProjector, omega0: &Mask, rho0: f64, settings: PowerIteration, seed: u64) -> f64 {
    let op = |x: &DMatrix<f64>| {
        let px = tp.project(x);
        &px - tp.project(&omega0.apply(&px)) / rho0
    };
    linalg::symmetric_operator_norm(omega0.shape(), op, settings, seed)
}

/// `‖(I − ρ₀⁻¹ P_T P_{Ω₀}) Z‖_∞ / ‖Z‖_∞` for `Z` in the tangent space.
pub fn tangent_sup_ratio(tp: &TangentProjector, omega0: &Mask, rho0: f64, z: &DMatrix<f64>) -> f64 {
    let out = z - tp.project(&omega0.apply(z)) / rho0;
    linalg::max_abs(&out) / linalg::max_abs(z)
}

/// `‖(ρ₀I − P_{Ω₀}) Z‖ / (√(n ρ₀ ln n) ‖Z‖_∞)`.
pub fn sampling_spectral_ratio(omega0: &Mask, rho0: f64, z: &DMatrix<f64>) -> Result<f64> {
    let n = z.nrows() as f64;
    let dev = z * rho0 - omega0.apply(z);
    Ok(linalg::spectral_norm(&dev)? / ((n * rho0 * n.ln()).sqrt() * linalg::max_abs(z)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_gaussian_frequency() {
        let freq = spectral_check_gaussian(1, 1, 0.0, 4000, 3).unwrap();
        // P(|g| ≤ 2) = 0.9545; four standard errors is about 0.013
        assert!((freq - 0.954_499_736_103_641_6).abs() < 0.014, "{freq}");
        assert!(spectral_check_gaussian(1, 1, 0.0, 0, 3).is_err());
    }

    #[test]
    fn frequency_monotone_in_t() {
        let f: Vec<f64> = [0.0, 0.5, 1.0, 2.0]
            .iter()
            .map(|&t| spectral_check_gaussian(5, 7, t, 100, 11).unwrap())
            .collect();
        assert!(f.windows(2).all(|w| w[0] <= w[1]), "{f:?}");
    }

    #[test]
    fn row_checks() {
        let q = linalg::orthonormalize(linalg::gaussian_matrix(8, 5, 2));
        assert!(spectral_check_rows(&q, &[0, 2, 4], &RowCheck::Gram).unwrap() < 1e-12);
        let a = linalg::gaussian_matrix(4, 6, 5);
        let col = spectral_check_rows(&a, &[2], &RowCheck::CrossCol).unwrap();
        let direct = (0..6).filter(|&j| j != 2).map(|j| a.column(2).dot(&a.column(j)).abs()).fold(0.0, f64::max);
        assert!((col - direct).abs() < 1e-12);
        let v = DVector::from_element(1, 1.0);
        assert!(spectral_check_rows(&a, &[], &RowCheck::CrossVec(DVector::zeros(0))).is_err());
        let cv = spectral_check_rows(&a, &[2], &RowCheck::CrossVec(v)).unwrap();
        assert!((cv - direct).abs() < 1e-12);
    }
}
