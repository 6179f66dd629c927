use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::linalg::{self, binomial, Combinations};
use crate::seed;

/// Largest number of `(T, V)` pairs `rip_constant_exact` will enumerate.
pub const RIP_BUDGET: f64 = 1e6;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RipReport {
    pub s1: usize,
    pub s2: usize,
    pub delta: f64,
    pub n_subsets_enumerated: usize,
    pub argmax_t: Vec<usize>,
    pub argmax_v: Vec<usize>,
}

/// Columns of `Φ = [A, I]` indexed by `T ∪ (n + V)`.
fn phi_columns(a: &DMatrix<f64>, t: &[usize], v: &[usize]) -> DMatrix<f64> {
    let m = a.nrows();
    let mut out = DMatrix::zeros(m, t.len() + v.len());
    for (k, &j) in t.iter().enumerate() {
        out.set_column(k, &a.column(j));
    }
    for (k, &i) in v.iter().enumerate() {
        out[(i, t.len() + k)] = 1.0;
    }
    out
}

/// `max(λ_max − 1, 1 − λ_min)` of the Gram matrix of `Φ` on `T ∪ (n + V)`.
pub fn rip_deviation(a: &DMatrix<f64>, t: &[usize], v: &[usize]) -> f64 {
    if t.is_empty() && v.is_empty() {
        return 0.0;
    }
    let cols = phi_columns(a, t, v);
    let eig = (cols.transpose() * &cols).symmetric_eigenvalues();
    (eig.max() - 1.0).max(1.0 - eig.min())
}

/// Exact `δ_{s1,s2}` of `[A, I]` by enumerating every `|T| = s1`, `|V| = s2`.
pub fn rip_constant_exact(a: &DMatrix<f64>, s1: usize, s2: usize) -> Result<RipReport> {
    let (m, n) = a.shape();
    if s1 > n || s2 > m {
        return invalid(format!("support sizes ({s1}, {s2}) exceed matrix shape {m}x{n}"));
    }
    let count = binomial(n, s1) * binomial(m, s2);
    if count > RIP_BUDGET {
        return invalid(format!("enumerating {count} support pairs exceeds the budget of {RIP_BUDGET}"));
    }
    let mut best = (f64::NEG_INFINITY, Vec::new(), Vec::new());
    let mut enumerated = 0;
    for t in Combinations::new(n, s1) {
        for v in Combinations::new(m, s2) {
            enumerated += 1;
            let dev = rip_deviation(a, &t, &v);
            if dev > best.0 {
                best = (dev, t.clone(), v);
            }
        }
    }
    Ok(RipReport {
        s1,
        s2,
        delta: best.0.max(0.0),
        n_subsets_enumerated: enumerated,
        argmax_t: best.1,
        argmax_v: best.2,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CrossTermReport {
    pub passed: bool,
    /// Worst `|⟨Φz₁, Φz₂⟩|/(‖z₁‖‖z₂‖)` over the exact maximizer and the probes.
    pub worst_ratio: f64,
    /// `σ_max(Φ_{S₁}ᵀ Φ_{S₂})`, the supremum of the ratio.
    pub exact_ratio: f64,
}

fn check_indices(name: &str, idx: &[usize], bound: usize) -> Result<()> {
    if let Some(&i) = idx.iter().find(|&&i| i >= bound) {
        return invalid(format!("{name} index {i} out of range 0..{bound}"));
    }
    Ok(())
}

fn disjoint(a: &[usize], b: &[usize]) -> bool {
    a.iter().all(|i| !b.contains(i))
}

/// Checks `|⟨Φ(x₁;f₁), Φ(x₂;f₂)⟩| ≤ δ‖(x₁;f₁)‖‖(x₂;f₂)‖` for vectors supported
/// on `(T₁, V₁)` and `(T₂, V₂)`, using the exact supremum plus `probes`
/// seeded random pairs.
#[allow(clippy::too_many_arguments)]
pub fn check_cross_term(
    a: &DMatrix<f64>,
    t1: &[usize],
    t2: &[usize],
    v1: &[usize],
    v2: &[usize],
    delta: f64,
    probes: usize,
    seed: u64,
) -> Result<CrossTermReport> {
    let (m, n) = a.shape();
    check_indices("T", t1, n)?;
    check_indices("T", t2, n)?;
    check_indices("V", v1, m)?;
    check_indices("V", v2, m)?;
    if !disjoint(t1, t2) || !disjoint(v1, v2) {
        return invalid("cross-term supports must be disjoint");
    }
    let p1 = phi_columns(a, t1, v1);
    let p2 = phi_columns(a, t2, v2);
    let cross = p1.transpose() * &p2;
    let exact = if cross.is_empty() { 0.0 } else { linalg::spectral_norm(&cross)? };
    let mut worst = exact;
    if !cross.is_empty() {
        let mut rng = seed::rng(seed);
        for _ in 0..probes {
            let z1 = DVector::<f64>::from_fn(p1.ncols(), |_, _| StandardNormal.sample(&mut rng));
            let z2 = DVector::<f64>::from_fn(p2.ncols(), |_, _| StandardNormal.sample(&mut rng));
            let ratio = (&p1 * &z1).dot(&(&p2 * &z2)).abs() / (z1.norm() * z2.norm());
            worst = worst.max(ratio);
        }
    }
    Ok(CrossTermReport {
        passed: worst <= delta + 1e-10,
        worst_ratio: worst,
        exact_ratio: exact,
    })
}
