//! Python bindings. Matrices cross the boundary as lists of rows, masks as
//! lists of `(row, col)` pairs.

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use robust_recovery::certificates;
use robust_recovery::cs_solver::{self, CsSolveOptions, Status};
use robust_recovery::experiments::{self, LambdaRule};
use robust_recovery::io::parse_config;
use robust_recovery::mc_solver::{self, McSolveOptions};
use robust_recovery::models::{self, EnsembleKind, MaskModel, McParams};
use robust_recovery::Mask;

fn py_err(e: robust_recovery::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err("rows have different lengths"));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn from_matrix(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn to_mask(n: usize, entries: &[(usize, usize)]) -> PyResult<Mask> {
    Mask::from_indices(n, n, entries.iter().copied()).map_err(py_err)
}

fn from_mask(m: &Mask) -> Vec<(usize, usize)> {
    m.iter().collect()
}

fn ensemble(name: &str) -> PyResult<EnsembleKind> {
    EnsembleKind::parse(name).map_err(py_err)
}

#[pyclass(frozen, get_all, module = "robust_recovery")]
struct CsInstance {
    a: Vec<Vec<f64>>,
    y: Vec<f64>,
    x: Vec<f64>,
    f: Vec<f64>,
    support_x: Vec<usize>,
    support_f: Vec<usize>,
}

#[pyclass(frozen, get_all, module = "robust_recovery")]
struct CsRecovery {
    x_hat: Vec<f64>,
    f_hat: Vec<f64>,
    converged: bool,
    iterations: usize,
    objective: f64,
    constraint_residual: f64,
    primal_residual: f64,
    dual_residual: f64,
}

#[pymethods]
impl CsRecovery {
    fn __repr__(&self) -> String {
        format!(
            "CsRecovery(converged={}, iterations={}, objective={})",
            self.converged, self.iterations, self.objective
        )
    }
}

#[pyclass(frozen, get_all, module = "robust_recovery")]
struct McInstance {
    l: Vec<Vec<f64>>,
    s: Vec<Vec<f64>>,
    m_obs: Vec<Vec<f64>>,
    observed: Vec<(usize, usize)>,
    corrupted: Vec<(usize, usize)>,
    incoherence: f64,
}

#[pyclass(frozen, get_all, module = "robust_recovery")]
struct McRecovery {
    l_hat: Vec<Vec<f64>>,
    s_hat: Vec<Vec<f64>>,
    converged: bool,
    iterations: usize,
    rank: usize,
    objective: f64,
    residual: f64,
}

#[pymethods]
impl McRecovery {
    fn __repr__(&self) -> String {
        format!(
            "McRecovery(converged={}, iterations={}, rank={}, objective={})",
            self.converged, self.iterations, self.rank, self.objective
        )
    }
}

#[pyclass(frozen, get_all, module = "robust_recovery")]
struct RipReport {
    delta: f64,
    argmax_t: Vec<usize>,
    argmax_v: Vec<usize>,
    subsets: usize,
}

#[pyfunction]
fn lambda_gaussian(m: usize, n: usize) -> PyResult<f64> {
    cs_solver::lambda_gaussian(m, n).map_err(py_err)
}

#[pyfunction]
fn lambda_general(n: usize) -> PyResult<f64> {
    cs_solver::lambda_general(n).map_err(py_err)
}

#[pyfunction]
fn lambda_mc(rho: f64, n: usize) -> PyResult<f64> {
    mc_solver::lambda_mc(rho, n).map_err(py_err)
}

/// Error constant `K(δ)` of the noisy guarantee, defined on `[0, 1/9)`.
#[pyfunction]
fn stability_constant(delta: f64) -> PyResult<f64> {
    certificates::stability_constant(delta).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (m, n, k_x, k_f, *, ensemble = "gaussian", epsilon = 0.0, seed))]
fn gen_cs_instance(
    m: usize,
    n: usize,
    k_x: usize,
    k_f: usize,
    ensemble: &str,
    epsilon: f64,
    seed: u64,
) -> PyResult<CsInstance> {
    let inst = models::gen_cs_instance(self::ensemble(ensemble)?, m, n, k_x, k_f, epsilon, seed).map_err(py_err)?;
    Ok(CsInstance {
        a: from_matrix(&inst.a.data),
        y: inst.y.iter().copied().collect(),
        x: inst.x_true.iter().copied().collect(),
        f: inst.f_true.iter().copied().collect(),
        support_x: inst.support_x,
        support_f: inst.support_f,
    })
}

/// `min ‖x‖₁ + λ‖f‖₁` subject to `‖Ax + f − y‖₂ ≤ ε`. `lam` is a number or
/// one of the rule names `gaussian`, `general`.
#[pyfunction]
#[pyo3(signature = (a, y, lam = "general", *, epsilon = 0.0, max_iters = 50_000, tol = 1e-8))]
fn solve_cs(
    a: Vec<Vec<f64>>,
    y: Vec<f64>,
    lam: &str,
    epsilon: f64,
    max_iters: usize,
    tol: f64,
) -> PyResult<CsRecovery> {
    let a = to_matrix(&a)?;
    let lambda = LambdaRule::parse(lam)
        .and_then(|r| r.cs_value(a.nrows(), a.ncols()))
        .map_err(py_err)?;
    let mut opts = CsSolveOptions::new(lambda).with_epsilon(epsilon);
    opts.max_iters = max_iters;
    opts.tol_primal = tol;
    opts.tol_dual = tol;
    let rec = cs_solver::solve_cs(&a, &DVector::from_vec(y), &opts).map_err(py_err)?;
    Ok(CsRecovery {
        x_hat: rec.x_hat.iter().copied().collect(),
        f_hat: rec.f_hat.iter().copied().collect(),
        converged: rec.status == Status::Converged,
        iterations: rec.iters,
        objective: rec.objective,
        constraint_residual: rec.constraint_residual,
        primal_residual: rec.primal_residual,
        dual_residual: rec.dual_residual,
    })
}

#[pyfunction]
#[pyo3(signature = (n, r, rho, s, *, model = "bernoulli", seed))]
fn gen_mc_instance(n: usize, r: usize, rho: f64, s: f64, model: &str, seed: u64) -> PyResult<McInstance> {
    let model = match model {
        "bernoulli" => MaskModel::Bernoulli,
        "direct" => MaskModel::Direct,
        "auxiliary" => MaskModel::Auxiliary,
        other => return Err(PyValueError::new_err(format!("unknown mask model {other:?}"))),
    };
    let inst = models::gen_mc_instance(&McParams::new(n, r, rho, s), model, None, seed).map_err(py_err)?;
    Ok(McInstance {
        l: from_matrix(&inst.l),
        s: from_matrix(&inst.s),
        m_obs: from_matrix(&inst.m_obs),
        observed: from_mask(&inst.o),
        corrupted: from_mask(&inst.omega),
        incoherence: inst.mu,
    })
}

/// `min ‖L‖_* + λ‖S‖₁` with `L + S` matching `m_obs` on `observed`. `lam` is
/// a number or `mc` (evaluated at the observed fraction).
#[pyfunction]
#[pyo3(signature = (m_obs, observed, lam = "mc", *, max_iters = 10_000, tol = 1e-7))]
fn solve_mc(
    m_obs: Vec<Vec<f64>>,
    observed: Vec<(usize, usize)>,
    lam: &str,
    max_iters: usize,
    tol: f64,
) -> PyResult<McRecovery> {
    let m = to_matrix(&m_obs)?;
    let n = m.nrows();
    let o = to_mask(n, &observed)?;
    let lambda = LambdaRule::parse(lam)
        .and_then(|r| r.mc_value(mc_solver::estimate_rho(&o, n), n))
        .map_err(py_err)?;
    let mut opts = McSolveOptions::new(lambda);
    opts.max_iters = max_iters;
    opts.tol = tol;
    let rec = mc_solver::solve_mc(&m, &o, &opts).map_err(py_err)?;
    Ok(McRecovery {
        l_hat: from_matrix(&rec.l_hat),
        s_hat: from_matrix(&rec.s_hat),
        converged: rec.status == Status::Converged,
        iterations: rec.iters,
        rank: rec.rank,
        objective: rec.objective,
        residual: rec.residual,
    })
}

/// Exact `δ_{s1,s2}` of `[A, I]` by enumerating every support pair.
#[pyfunction]
fn rip_constant_exact(a: Vec<Vec<f64>>, s1: usize, s2: usize) -> PyResult<RipReport> {
    let rep = certificates::rip_constant_exact(&to_matrix(&a)?, s1, s2).map_err(py_err)?;
    Ok(RipReport {
        delta: rep.delta,
        argmax_t: rep.argmax_t,
        argmax_v: rep.argmax_v,
        subsets: rep.n_subsets_enumerated,
    })
}

/// Runs a TOML experiment config and returns its CSV report.
#[pyfunction]
fn run_experiment(py: Python<'_>, config: &str) -> PyResult<String> {
    let cfg = parse_config(config, std::path::Path::new("<string>")).map_err(py_err)?;
    let out = py.detach(|| experiments::run_config(&cfg)).map_err(py_err)?;
    Ok(out.csv())
}

#[pymodule]
#[pyo3(name = "robust_recovery")]
fn robust_recovery_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<CsInstance>()?;
    m.add_class::<CsRecovery>()?;
    m.add_class::<McInstance>()?;
    m.add_class::<McRecovery>()?;
    m.add_class::<RipReport>()?;
    m.add_function(wrap_pyfunction!(lambda_gaussian, m)?)?;
    m.add_function(wrap_pyfunction!(lambda_general, m)?)?;
    m.add_function(wrap_pyfunction!(lambda_mc, m)?)?;
    m.add_function(wrap_pyfunction!(stability_constant, m)?)?;
    m.add_function(wrap_pyfunction!(gen_cs_instance, m)?)?;
    m.add_function(wrap_pyfunction!(solve_cs, m)?)?;
    m.add_function(wrap_pyfunction!(gen_mc_instance, m)?)?;
    m.add_function(wrap_pyfunction!(solve_mc, m)?)?;
    m.add_function(wrap_pyfunction!(rip_constant_exact, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
