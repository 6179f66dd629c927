//! Corrupted matrix completion: `min ‖L‖_* + λ‖S‖₁` subject to
//! `P_O(L) + S = M_obs`, with `S` living on `O`.
//!
//! The iteration works with `L + E = M_obs` where `E` equals `S` on `O` and is
//! unpenalized off `O`, so off-`O` entries of `L` are free.

use nalgebra::DMatrix;

use crate::cs_solver::{balance_due, Status};
use crate::error::{invalid, Error, Result};
use crate::linalg;
use crate::mask::Mask;
use crate::proxops::{soft_threshold, svt};

/// `1/√(ρ n ln n)`.
pub fn lambda_mc(rho: f64, n: usize) -> Result<f64> {
    if !(rho > 0.0 && rho <= 1.0) {
        return invalid(format!("rho must lie in (0, 1], got {rho}"));
    }
    if n < 2 {
        return invalid(format!("lambda_mc needs n >= 2, got {n}"));
    }
    Ok(1.0 / (rho * n as f64 * (n as f64).ln()).sqrt())
}

/// `|O|/n²`.
pub fn estimate_rho(o: &Mask, n: usize) -> f64 {
    o.len() as f64 / (n * n) as f64
}

#[derive(Clone, Debug)]
pub struct McSolveOptions {
    pub lambda: f64,
    /// Initial penalty; `None` picks `n²/(4‖M_obs‖₁)`.
    pub penalty: Option<f64>,
    pub adapt_penalty: bool,
    pub max_iters: usize,
    pub tol: f64,
}

impl McSolveOptions {
    pub fn new(lambda: f64) -> Self {
        McSolveOptions {
            lambda,
            penalty: None,
            adapt_penalty: true,
            max_iters: 10_000,
            tol: 1e-7,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) {
            return invalid(format!("lambda must be positive, got {}", self.lambda));
        }
        if let Some(p) = self.penalty {
            if !(p > 0.0) {
                return invalid(format!("penalty must be positive, got {p}"));
            }
        }
        if self.max_iters == 0 {
            return invalid("max_iters must be at least 1");
        }
        if !(self.tol > 0.0) {
            return invalid("tol must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct McRecovery {
    pub l_hat: DMatrix<f64>,
    /// Supported on `O`.
    pub s_hat: DMatrix<f64>,
    pub status: Status,
    pub iters: usize,
    /// `‖P_O(L̂) + Ŝ − M_obs‖_F`.
    pub residual: f64,
    pub dual_residual: f64,
    pub rank: usize,
    /// `‖L̂‖_* + λ‖Ŝ‖₁`.
    pub objective: f64,
}

pub fn mc_objective(l: &DMatrix<f64>, s: &DMatrix<f64>, lambda: f64) -> Result<f64> {
    Ok(linalg::nuclear_norm(l)? + lambda * linalg::l1_norm(s.iter().copied()))
}

pub fn solve_mc(m_obs: &DMatrix<f64>, o: &Mask, opts: &McSolveOptions) -> Result<McRecovery> {
    opts.validate()?;
    let (n1, n2) = m_obs.shape();
    if o.shape() != (n1, n2) {
        return invalid(format!("mask is {:?}, observations are {n1}x{n2}", o.shape()));
    }
    if let Some((i, j)) = (0..n2)
        .flat_map(|j| (0..n1).map(move |i| (i, j)))
        .find(|&(i, j)| !o.contains(i, j) && m_obs[(i, j)] != 0.0)
    {
        return invalid(format!("observations are nonzero off the mask at ({i}, {j})"));
    }
    let l1 = linalg::l1_norm(m_obs.iter().copied());
    let scale = m_obs.norm().max(1.0);
    let mut mu = match opts.penalty {
        Some(p) => p,
        None if l1 > 0.0 => (n1 * n2) as f64 / (4.0 * l1),
        None => 1.0,
    };

    let mut l = DMatrix::zeros(n1, n2);
    let mut e = DMatrix::<f64>::zeros(n1, n2);
    let mut y = DMatrix::zeros(n1, n2);
    let mut rank = 0;
    let mut status = Status::MaxIters;
    let mut iters = 0;
    let mut dual = f64::INFINITY;
    for k in 1..=opts.max_iters {
        iters = k;
        let (l_new, r) = svt(&(m_obs - &e + &y / mu), 1.0 / mu)?;
        l = l_new;
        rank = r;
        let target = m_obs - &l + &y / mu;
        let e_old = std::mem::replace(
            &mut e,
            DMatrix::from_fn(n1, n2, |i, j| {
                let t = target[(i, j)];
                if o.contains(i, j) {
                    soft_threshold(t, opts.lambda / mu)
                } else {
                    t
                }
            }),
        );
        let gap = m_obs - &l - &e;
        y += &gap * mu;
        let primal = gap.norm();
        dual = mu * (&e - &e_old).norm();
        if primal <= opts.tol * scale && dual <= opts.tol * scale {
            status = Status::Converged;
            break;
        }
        if opts.adapt_penalty && balance_due(k) {
            if primal > 10.0 * dual {
                mu *= 2.0;
            } else if dual > 10.0 * primal {
                mu /= 2.0;
            }
        }
    }
    if l.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("matrix completion iterates diverged".into()));
    }
    let s_hat = o.apply(&e);
    let residual = (o.apply(&l) + &s_hat - m_obs).norm();
    Ok(McRecovery {
        objective: mc_objective(&l, &s_hat, opts.lambda)?,
        l_hat: l,
        s_hat,
        status,
        iters,
        residual,
        dual_residual: dual,
        rank,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_values() {
        assert!((lambda_mc(0.25, 100).unwrap() - 0.093_198_120_356_931_22).abs() < 1e-12);
        assert!((lambda_mc(1.0, 3).unwrap() - 0.550_829_443_241_988_6).abs() < 1e-12);
        assert!(lambda_mc(0.5, 50).unwrap() > lambda_mc(0.6, 50).unwrap());
        assert!(lambda_mc(0.5, 50).unwrap() > lambda_mc(0.5, 51).unwrap());
        assert!(lambda_mc(0.0, 10).is_err());
        assert!(lambda_mc(1.5, 10).is_err());
        assert!(lambda_mc(0.5, 1).is_err());
    }

    #[test]
    fn rho_estimate() {
        assert_eq!(estimate_rho(&Mask::full(4, 4), 4), 1.0);
        assert_eq!(estimate_rho(&Mask::empty(4, 4), 4), 0.0);
        let half = Mask::from_fn(10, 10, |i, _| i < 5);
        assert_eq!(estimate_rho(&half, 10), 0.5);
    }

    #[test]
    fn zero_observations() {
        let o = Mask::from_fn(6, 6, |i, j| (i + j) % 2 == 0);
        let rec = solve_mc(&DMatrix::zeros(6, 6), &o, &McSolveOptions::new(0.3)).unwrap();
        assert_eq!(rec.status, Status::Converged);
        assert_eq!(rec.l_hat.norm(), 0.0);
        assert_eq!(rec.s_hat.norm(), 0.0);
    }

    #[test]
    fn rejects_bad_input() {
        let o = Mask::from_fn(3, 3, |i, j| i == j);
        let mut m = DMatrix::zeros(3, 3);
        m[(0, 1)] = 1.0;
        assert!(solve_mc(&m, &o, &McSolveOptions::new(0.3)).is_err());
        assert!(solve_mc(&DMatrix::zeros(3, 3), &Mask::full(2, 2), &McSolveOptions::new(0.3)).is_err());
    }
}
