//! ℓ1/ℓ1 recovery: `min ‖x‖₁ + λ‖f‖₁` subject to `Ax + f = y` or
//! `‖Ax + f − y‖₂ ≤ ε`, solved by ADMM with residual balancing.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{self, Combinations};
use crate::proxops::{project_ball, soft_threshold, AffineProjector};

/// `1/√(ln(n/m) + 1)`, the weight for Gaussian sensing matrices.
pub fn lambda_gaussian(m: usize, n: usize) -> Result<f64> {
    if m == 0 || m > n {
        return invalid(format!("lambda_gaussian needs 1 <= m <= n, got m={m}, n={n}"));
    }
    Ok(1.0 / ((n as f64 / m as f64).ln() + 1.0).sqrt())
}

/// `1/√(ln n)`, the weight for bounded orthonormal row ensembles.
pub fn lambda_general(n: usize) -> Result<f64> {
    if n < 2 {
        return invalid(format!("lambda_general needs n >= 2, got {n}"));
    }
    Ok(1.0 / (n as f64).ln().sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Converged,
    MaxIters,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Init {
    #[default]
    Zero,
    /// Seeded Gaussian starting point.
    Random,
}

#[derive(Clone, Debug)]
pub struct CsSolveOptions {
    pub lambda: f64,
    pub epsilon: f64,
    /// Initial ADMM penalty.
    pub penalty: f64,
    /// Rebalance the penalty when primal and dual residuals drift apart.
    pub adapt_penalty: bool,
    pub max_iters: usize,
    pub tol_primal: f64,
    pub tol_dual: f64,
    pub init: Init,
    pub seed: u64,
}

impl CsSolveOptions {
    pub fn new(lambda: f64) -> Self {
        CsSolveOptions {
            lambda,
            epsilon: 0.0,
            penalty: 1.0,
            adapt_penalty: true,
            max_iters: 50_000,
            tol_primal: 1e-8,
            tol_dual: 1e-8,
            init: Init::Zero,
            seed: 0,
        }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) {
            return invalid(format!("lambda must be positive, got {}", self.lambda));
        }
        if !(self.epsilon >= 0.0) {
            return invalid(format!("epsilon must be non-negative, got {}", self.epsilon));
        }
        if !(self.penalty > 0.0) {
            return invalid(format!("penalty must be positive, got {}", self.penalty));
        }
        if self.max_iters == 0 {
            return invalid("max_iters must be at least 1");
        }
        if !(self.tol_primal > 0.0 && self.tol_dual > 0.0) {
            return invalid("tolerances must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct CsRecovery {
    pub x_hat: DVector<f64>,
    pub f_hat: DVector<f64>,
    pub status: Status,
    pub iters: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// `‖Ax̂ + f̂ − y‖₂`.
    pub constraint_residual: f64,
    /// `‖x̂‖₁ + λ‖f̂‖₁`.
    pub objective: f64,
}

const BALANCE_RATIO: f64 = 10.0;
const BALANCE_FACTOR: f64 = 2.0;
/// Rebalancing is checked every `BALANCE_PERIOD` iterations and stops after
/// `BALANCE_WINDOW`, so the tail runs at a fixed penalty.
pub(crate) const BALANCE_PERIOD: usize = 25;
pub(crate) const BALANCE_WINDOW: usize = 2_500;

pub(crate) fn balance_due(k: usize) -> bool {
    k % BALANCE_PERIOD == 0 && k <= BALANCE_WINDOW
}

fn weighted_shrink(v: &DVector<f64>, n: usize, lambda: f64, penalty: f64) -> DVector<f64> {
    DVector::from_fn(v.len(), |i, _| {
        let weight = if i < n { 1.0 } else { lambda };
        soft_threshold(v[i], weight / penalty)
    })
}

fn objective(x: &DVector<f64>, f: &DVector<f64>, lambda: f64) -> f64 {
    linalg::l1_norm(x.iter().copied()) + lambda * linalg::l1_norm(f.iter().copied())
}

fn initial_point(len: usize, opts: &CsSolveOptions) -> DVector<f64> {
    match opts.init {
        Init::Zero => DVector::zeros(len),
        Init::Random => linalg::gaussian_matrix(len, 1, opts.seed).column(0).into_owned(),
    }
}

struct Residuals {
    primal: f64,
    dual: f64,
    primal_scale: f64,
    dual_scale: f64,
}

impl Residuals {
    fn small(&self, opts: &CsSolveOptions) -> bool {
        self.primal <= opts.tol_primal * self.primal_scale.max(1.0)
            && self.dual <= opts.tol_dual * self.dual_scale.max(1.0)
    }
}

/// Returns the factor by which the scaled dual must be multiplied.
fn rebalance(penalty: &mut f64, res: &Residuals) -> Option<f64> {
    if res.primal > BALANCE_RATIO * res.dual {
        *penalty *= BALANCE_FACTOR;
        Some(1.0 / BALANCE_FACTOR)
    } else if res.dual > BALANCE_RATIO * res.primal {
        *penalty /= BALANCE_FACTOR;
        Some(BALANCE_FACTOR)
    } else {
        None
    }
}

/// Solves `min ‖x‖₁ + λ‖f‖₁ s.t. ‖Ax + f − y‖₂ ≤ ε` (equality when `ε = 0`).
pub fn solve_cs(a: &DMatrix<f64>, y: &DVector<f64>, opts: &CsSolveOptions) -> Result<CsRecovery> {
    opts.validate()?;
    if y.len() != a.nrows() {
        return invalid(format!("y has length {}, A has {} rows", y.len(), a.nrows()));
    }
    if opts.epsilon == 0.0 {
        solve_equality(a, y, opts)
    } else {
        solve_ball(a, y, opts)
    }
}

// z = proj(w − u); w = shrink(z + u); u += z − w
fn solve_equality(a: &DMatrix<f64>, y: &DVector<f64>, opts: &CsSolveOptions) -> Result<CsRecovery> {
    let (m, n) = a.shape();
    let proj = AffineProjector::new(a, y)?;
    let mut penalty = opts.penalty;
    let mut w = initial_point(n + m, opts);
    let mut u = DVector::zeros(n + m);
    let mut res = Residuals {
        primal: f64::INFINITY,
        dual: f64::INFINITY,
        primal_scale: 1.0,
        dual_scale: 1.0,
    };
    let mut status = Status::MaxIters;
    let mut iters = 0;
    for k in 1..=opts.max_iters {
        iters = k;
        let z = proj.project(&(&w - &u));
        let w_old = std::mem::replace(&mut w, weighted_shrink(&(&z + &u), n, opts.lambda, penalty));
        u += &z - &w;
        res = Residuals {
            primal: (&z - &w).norm(),
            dual: penalty * (&w - &w_old).norm(),
            primal_scale: z.norm().max(w.norm()),
            dual_scale: penalty * u.norm(),
        };
        if res.small(opts) {
            status = Status::Converged;
            break;
        }
        if opts.adapt_penalty && balance_due(k) {
            if let Some(scale) = rebalance(&mut penalty, &res) {
                u *= scale;
            }
        }
    }
    // the projection of the sparse iterate is exactly feasible
    let z = proj.project(&w);
    finish(a, y, z, n, opts, status, iters, &res)
}

// min g(w) + ι_ball(r)  s.t.  z − w = 0,  Φz − r = y
fn solve_ball(a: &DMatrix<f64>, y: &DVector<f64>, opts: &CsSolveOptions) -> Result<CsRecovery> {
    let (m, n) = a.shape();
    let eps = opts.epsilon;
    let phi = |z: &DVector<f64>| a * z.rows(0, n) + z.rows(n, m);
    let phi_t = |v: &DVector<f64>| {
        let mut out = DVector::zeros(n + m);
        out.rows_mut(0, n).copy_from(&(a.transpose() * v));
        out.rows_mut(n, m).copy_from(v);
        out
    };
    // (I + Φ*Φ)⁻¹ = I − Φ*(2I + AA*)⁻¹Φ
    let gram = a * a.transpose() + DMatrix::identity(m, m) * 2.0;
    let gram = Cholesky::new(gram).ok_or_else(|| Error::Numerical("Cholesky of AA* + 2I failed".into()))?;
    let solve_normal = |rhs: &DVector<f64>| rhs - phi_t(&gram.solve(&phi(rhs)));

    let zero_m = DVector::zeros(m);
    let mut penalty = opts.penalty;
    let mut w = initial_point(n + m, opts);
    let mut r = DVector::zeros(m);
    let mut u = DVector::zeros(n + m);
    let mut v = DVector::zeros(m);
    let mut res = Residuals {
        primal: f64::INFINITY,
        dual: f64::INFINITY,
        primal_scale: 1.0,
        dual_scale: 1.0,
    };
    let mut status = Status::MaxIters;
    let mut iters = 0;
    for k in 1..=opts.max_iters {
        iters = k;
        let rhs = (&w - &u) + phi_t(&(&r + y - &v));
        let z = solve_normal(&rhs);
        let phi_z = phi(&z);
        let w_old = std::mem::replace(&mut w, weighted_shrink(&(&z + &u), n, opts.lambda, penalty));
        let r_old = std::mem::replace(&mut r, project_ball(&(&phi_z - y + &v), &zero_m, eps));
        let gap_w = &z - &w;
        let gap_r = &phi_z - y - &r;
        u += &gap_w;
        v += &gap_r;
        let dual_vec = (&w - &w_old) + phi_t(&(&r - &r_old));
        res = Residuals {
            primal: (gap_w.norm_squared() + gap_r.norm_squared()).sqrt(),
            dual: penalty * dual_vec.norm(),
            primal_scale: (z.norm_squared() + phi_z.norm_squared())
                .sqrt()
                .max((w.norm_squared() + (&r + y).norm_squared()).sqrt()),
            dual_scale: penalty * (&u + phi_t(&v)).norm(),
        };
        let violation = ((phi(&w) - y).norm() - eps).max(0.0);
        if res.small(opts) && violation <= opts.tol_primal * (1.0 + y.norm()) {
            status = Status::Converged;
            break;
        }
        if opts.adapt_penalty && balance_due(k) {
            if let Some(scale) = rebalance(&mut penalty, &res) {
                u *= scale;
                v *= scale;
            }
        }
    }
    finish(a, y, w, n, opts, status, iters, &res)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    z: DVector<f64>,
    n: usize,
    opts: &CsSolveOptions,
    status: Status,
    iters: usize,
    res: &Residuals,
) -> Result<CsRecovery> {
    let m = a.nrows();
    let x_hat = z.rows(0, n).into_owned();
    let f_hat = z.rows(n, m).into_owned();
    if x_hat.iter().chain(f_hat.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numerical("ADMM iterates diverged".into()));
    }
    let constraint_residual = (a * &x_hat + &f_hat - y).norm();
    Ok(CsRecovery {
        objective: objective(&x_hat, &f_hat, opts.lambda),
        x_hat,
        f_hat,
        status,
        iters,
        primal_residual: res.primal,
        dual_residual: res.dual,
        constraint_residual,
    })
}

/// Exact minimizer of the noiseless program found by enumeration.
#[derive(Clone, Debug)]
pub struct BruteForceSolution {
    pub x: DVector<f64>,
    pub f: DVector<f64>,
    pub objective: f64,
}

pub const BRUTE_FORCE_MAX_M: usize = 8;
pub const BRUTE_FORCE_MAX_N: usize = 10;

/// Enumerates every `m`-column basis of `[A, I]`, solves the square system
/// and keeps the feasible basic solution of least `‖x‖₁ + λ‖f‖₁`. An LP
/// attains its optimum at a vertex, so this is the exact minimum.
pub fn brute_force_cs(a: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<BruteForceSolution> {
    let (m, n) = a.shape();
    if m > BRUTE_FORCE_MAX_M || n > BRUTE_FORCE_MAX_N {
        return invalid(format!(
            "brute force is limited to m <= {BRUTE_FORCE_MAX_M}, n <= {BRUTE_FORCE_MAX_N} (got {m}x{n})"
        ));
    }
    if y.len() != m {
        return invalid(format!("y has length {}, A has {m} rows", y.len()));
    }
    if !(lambda > 0.0) {
        return invalid(format!("lambda must be positive, got {lambda}"));
    }
    let column = |j: usize, i: usize| if j < n { a[(i, j)] } else if i == j - n { 1.0 } else { 0.0 };
    let tol = 1e-9 * (1.0 + y.norm());
    let mut best: Option<(f64, DVector<f64>)> = None;
    for basis in Combinations::new(n + m, m) {
        let b = DMatrix::from_fn(m, m, |i, k| column(basis[k], i));
        let Some(coef) = b.clone().lu().solve(y) else {
            continue;
        };
        if !coef.iter().all(|v| v.is_finite()) || (&b * &coef - y).norm() > tol {
            continue;
        }
        let mut z = DVector::zeros(n + m);
        for (k, &j) in basis.iter().enumerate() {
            z[j] = coef[k];
        }
        let obj = objective(&z.rows(0, n).into_owned(), &z.rows(n, m).into_owned(), lambda);
        if best.as_ref().map_or(true, |(b, _)| obj < *b) {
            best = Some((obj, z));
        }
    }
    let (objective, z) = best.ok_or_else(|| Error::Numerical("no nonsingular basis found".into()))?;
    Ok(BruteForceSolution {
        x: z.rows(0, n).into_owned(),
        f: z.rows(n, m).into_owned(),
        objective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{gen_cs_instance, EnsembleKind};

    #[test]
    fn lambda_formulas() {
        assert_eq!(lambda_gaussian(7, 7).unwrap(), 1.0);
        assert!((lambda_gaussian(256, 1024).unwrap() - 0.647_348_271_177_428_2).abs() < 1e-12);
        assert!(lambda_gaussian(5, 4).is_err());
        assert!((lambda_general(3).unwrap() - 0.954_064_582_000_001_3).abs() < 1e-12);
        assert!((lambda_general(1000).unwrap() - 0.380_479_733_101_625_2).abs() < 1e-12);
        assert!(lambda_general(1).is_err());
        for n in 2..2000 {
            assert!(lambda_general(n).unwrap() < 1.5);
        }
    }

    #[test]
    fn lambda_gaussian_at_e_ratio() {
        // n/m = e exactly is not representable with integers; use the formula's limit
        let m = 1_000_000usize;
        let n = (m as f64 * std::f64::consts::E).round() as usize;
        assert!((lambda_gaussian(m, n).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-6);
    }

    #[test]
    fn brute_force_hand_cases() {
        let a = DMatrix::from_element(1, 1, 1.0);
        let y = DVector::from_element(1, 2.0);
        assert!((brute_force_cs(&a, &y, 1.0).unwrap().objective - 2.0).abs() < 1e-15);
        let half = brute_force_cs(&a, &y, 0.5).unwrap();
        assert!((half.objective - 1.0).abs() < 1e-15);
        assert_eq!(half.f[0], 2.0);
        assert_eq!(half.x[0], 0.0);
        let zero = brute_force_cs(&DMatrix::from_element(3, 4, 0.3), &DVector::zeros(3), 0.7).unwrap();
        assert_eq!(zero.objective, 0.0);
        assert!(brute_force_cs(&DMatrix::zeros(9, 3), &DVector::zeros(9), 1.0).is_err());
    }

    #[test]
    fn zero_measurements_give_zero() {
        let a = crate::linalg::gaussian_matrix(5, 9, 1);
        let rec = solve_cs(&a, &DVector::zeros(5), &CsSolveOptions::new(0.8)).unwrap();
        assert_eq!(rec.status, Status::Converged);
        assert_eq!(rec.objective, 0.0);
        assert!(rec.x_hat.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dimension_and_option_errors() {
        let a = DMatrix::zeros(3, 4);
        assert!(solve_cs(&a, &DVector::zeros(2), &CsSolveOptions::new(1.0)).is_err());
        assert!(solve_cs(&a, &DVector::zeros(3), &CsSolveOptions::new(-1.0)).is_err());
        let mut o = CsSolveOptions::new(1.0);
        o.max_iters = 0;
        assert!(o.validate().is_err());
    }

    #[test]
    fn matches_oracle_on_small_instance() {
        let inst = gen_cs_instance(EnsembleKind::GaussianIid, 6, 8, 1, 1, 0.0, 42).unwrap();
        let lambda = lambda_gaussian(6, 8).unwrap();
        let rec = solve_cs(&inst.a.data, &inst.y, &CsSolveOptions::new(lambda)).unwrap();
        let oracle = brute_force_cs(&inst.a.data, &inst.y, lambda).unwrap();
        assert_eq!(rec.status, Status::Converged);
        assert!((rec.objective - oracle.objective).abs() <= 1e-6 * (1.0 + oracle.objective));
    }

    #[test]
    fn noisy_solution_stays_in_ball() {
        let inst = gen_cs_instance(EnsembleKind::GaussianIid, 40, 80, 3, 2, 0.05, 3).unwrap();
        let opts = CsSolveOptions::new(lambda_gaussian(40, 80).unwrap()).with_epsilon(0.05);
        let rec = solve_cs(&inst.a.data, &inst.y, &opts).unwrap();
        assert_eq!(rec.status, Status::Converged);
        assert!(rec.constraint_residual <= 0.05 + 1e-8 * (1.0 + inst.y.norm()));
        let err = (&rec.x_hat - &inst.x_true).norm() + (&rec.f_hat - &inst.f_true).norm();
        assert!(err < 1.0, "{err}");
    }
}
