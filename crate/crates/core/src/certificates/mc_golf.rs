use nalgebra::DMatrix;
use rand::Rng;

use super::spectral::tangent_deviation;
use super::{all_passed, Margin};
use crate::error::{invalid, Result};
use crate::linalg::{self, PowerIteration};
use crate::mask::Mask;
use crate::models::McInstance;
use crate::proxops::TangentProjector;
use crate::seed;

/// `⌊5 ln n + 1⌋`.
pub fn mc_block_count(n: usize) -> usize {
    (5.0 * (n as f64).ln() + 1.0).floor() as usize
}

/// Inclusion rates `q_1 = q_2 = ρ′/6`, `q_3 = … = q_l = q` with
/// `1 − ρ′ = (1 − ρ′/6)²(1 − q)^{l−2}`.
pub fn mc_block_rates(rho_prime: f64, l: usize) -> Result<Vec<f64>> {
    if !(rho_prime > 0.0 && rho_prime < 1.0) {
        return invalid(format!("sampling rate must lie in (0, 1), got {rho_prime}"));
    }
    if l < 3 {
        return invalid(format!("golfing needs at least 3 blocks, got {l}"));
    }
    let first = rho_prime / 6.0;
    let base = (1.0 - rho_prime) / (1.0 - first).powi(2);
    let q = 1.0 - base.powf(1.0 / (l - 2) as f64);
    if !(q > 0.0 && q < 1.0) {
        return invalid(format!("no block rate in (0, 1) for rate {rho_prime} and {l} blocks"));
    }
    let mut rates = vec![first, first];
    rates.resize(l, q);
    Ok(rates)
}

#[derive(Clone, Debug)]
pub struct McCertificate {
    pub y: DMatrix<f64>,
    /// `‖Z_0‖_F, …, ‖Z_l‖_F`.
    pub z_fro: Vec<f64>,
    /// `‖Z_0‖_∞, …, ‖Z_l‖_∞`.
    pub z_inf: Vec<f64>,
    pub q_sequence: Vec<f64>,
    pub block_sizes: Vec<usize>,
    /// `‖P_T Y − (Z_0 − Z_l)‖_F`.
    pub telescoping_residual: f64,
    pub margins: Vec<Margin>,
}

impl McCertificate {
    pub fn margins_pass(&self) -> bool {
        all_passed(&self.margins)
    }
}

/// Splits `Γ′` into possibly overlapping blocks whose union is `Γ′`: each
/// entry draws independent `Ber(q_j)` memberships, redrawn until at least one
/// is set.
fn split_blocks(gamma_prime: &Mask, rates: &[f64], seed: u64) -> Vec<Mask> {
    let (rows, cols) = gamma_prime.shape();
    let mut blocks = vec![Mask::empty(rows, cols); rates.len()];
    let mut rng = seed::rng(seed);
    let mut member = vec![false; rates.len()];
    for (i, j) in gamma_prime.iter() {
        loop {
            for (slot, &q) in member.iter_mut().zip(rates) {
                *slot = rng.random::<f64>() < q;
            }
            if member.iter().any(|&b| b) {
                break;
            }
        }
        for (blk, _) in blocks.iter_mut().zip(&member).filter(|(_, &b)| b) {
            blk.insert(i, j);
        }
    }
    blocks
}

fn certificate_margins(
    tp: &TangentProjector,
    y: &DMatrix<f64>,
    uv: &DMatrix<f64>,
    g: &DMatrix<f64>,
    gamma_prime: &Mask,
    lambda: f64,
    first_bound: f64,
) -> Result<Vec<Margin>> {
    let lg = g * lambda;
    let c1 = tp.project(&(y + &lg - uv)).norm();
    let c2 = linalg::spectral_norm(&tp.project_perp(&(y + &lg)))?;
    let c3 = gamma_prime.complement().apply(y).norm();
    let c4 = linalg::max_abs(&gamma_prime.apply(y));
    Ok(vec![
        Margin::new("tangent residual fro", c1, first_bound),
        Margin::new("normal part spectral", c2, 0.25),
        Margin::new("outside support fro", c3, 0.0),
        Margin::new("on support linf", c4, lambda / 4.0),
    ])
}

/// Golfing certificate with an arbitrary sign term `G` in place of
/// `P_{Ω′}W`: `Z_0 = P_T(UV* − λG)`.
#[allow(clippy::too_many_arguments)]
pub fn build_mc_certificate_with(
    u: &DMatrix<f64>,
    v: &DMatrix<f64>,
    gamma_prime: &Mask,
    g: &DMatrix<f64>,
    lambda: f64,
    rho_prime: f64,
    seed: u64,
) -> Result<McCertificate> {
    let n = u.nrows();
    if gamma_prime.shape() != (n, n) || g.shape() != (n, n) || v.nrows() != n {
        return invalid("certificate inputs must all be n x n");
    }
    let tp = TangentProjector::new(u, v)?;
    let l = mc_block_count(n);
    let rates = mc_block_rates(rho_prime, l)?;
    let blocks = split_blocks(gamma_prime, &rates, seed);
    let uv = u * v.transpose();
    let z0 = tp.project(&(&uv - g * lambda));
    let mut z = z0.clone();
    let mut y = DMatrix::zeros(n, n);
    let mut z_fro = vec![z.norm()];
    let mut z_inf = vec![linalg::max_abs(&z)];
    for (blk, &q) in blocks.iter().zip(&rates) {
        let step = blk.apply(&z) / q;
        z -= tp.project(&step);
        y += step;
        z_fro.push(z.norm());
        z_inf.push(linalg::max_abs(&z));
    }
    let telescoping_residual = (tp.project(&y) - (&z0 - &z)).norm();
    let margins = certificate_margins(&tp, &y, &uv, g, gamma_prime, lambda, lambda / (2.0 * (n * n) as f64))?;
    Ok(McCertificate {
        y,
        z_fro,
        z_inf,
        q_sequence: rates,
        block_sizes: blocks.iter().map(Mask::len).collect(),
        telescoping_residual,
        margins,
    })
}

/// Golfing certificate for an instance drawn with the auxiliary mask model.
pub fn build_mc_certificate(inst: &McInstance, lambda: f64, seed: u64) -> Result<McCertificate> {
    let inputs = McDualityInputs::from_instance(inst)?;
    let g = inputs.omega_prime.apply(&inputs.w);
    build_mc_certificate_with(&inst.u, &inst.v, &inputs.gamma_prime, &g, lambda, inputs.rho_prime, seed)
}

/// Everything the duality conditions depend on.
#[derive(Clone, Debug)]
pub struct McDualityInputs {
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub o: Mask,
    pub gamma_prime: Mask,
    pub omega_prime: Mask,
    pub w: DMatrix<f64>,
    /// `(1 − 2s)ρ`.
    pub rho_prime: f64,
}

impl McDualityInputs {
    pub fn from_instance(inst: &McInstance) -> Result<Self> {
        let Some(aux) = &inst.aux else {
            return invalid("instance lacks the auxiliary-model masks");
        };
        Ok(McDualityInputs {
            u: inst.u.clone(),
            v: inst.v.clone(),
            o: inst.o.clone(),
            gamma_prime: aux.gamma_prime.clone(),
            omega_prime: aux.omega_prime.clone(),
            w: aux.w.clone(),
            rho_prime: (1.0 - 2.0 * inst.s_rate) * inst.rho,
        })
    }
}

/// `(‖ρ′⁻¹P_T P_{Γ′} P_T − P_T‖, ‖ρ′^{−1/2} P_T P_{Γ′}‖)`; the second is the
/// square root of `‖ρ′⁻¹ P_T P_{Γ′} P_T‖`.
pub fn tangent_gamma_norms(
    tp: &TangentProjector,
    gamma_prime: &Mask,
    rho_prime: f64,
    settings: PowerIteration,
    seed: u64,
) -> (f64, f64) {
    let dev = tangent_deviation(tp, gamma_prime, rho_prime, settings, seed);
    let op = |x: &DMatrix<f64>| tp.project(&gamma_prime.apply(&tp.project(x))) / rho_prime;
    let gain = linalg::symmetric_operator_norm(gamma_prime.shape(), op, settings, seed::stream(seed, 1));
    (dev, gain.sqrt())
}

#[derive(Clone, Debug)]
pub struct McDualityReport {
    /// The four certificate conditions followed by the two sampling assumptions.
    pub conditions: Vec<Margin>,
    /// Every condition holds, so the program returns `(L, S)`.
    pub guarantee: bool,
}

pub fn verify_mc_duality(
    y: &DMatrix<f64>,
    inputs: &McDualityInputs,
    lambda: f64,
    settings: PowerIteration,
    seed: u64,
) -> Result<McDualityReport> {
    let n = inputs.u.nrows();
    if y.shape() != (n, n) {
        return invalid(format!("Y is {:?}, expected {n}x{n}", y.shape()));
    }
    let tp = TangentProjector::new(&inputs.u, &inputs.v)?;
    let uv = &inputs.u * inputs.v.transpose();
    let g = inputs.o.difference(&inputs.gamma_prime).apply(&inputs.w);
    let mut conditions = certificate_margins(&tp, y, &uv, &g, &inputs.gamma_prime, lambda, lambda / (n * n) as f64)?;
    let (dev, gain) = tangent_gamma_norms(&tp, &inputs.gamma_prime, inputs.rho_prime, settings, seed);
    conditions.push(Margin::new("sampled tangent deviation", dev, 0.5));
    conditions.push(Margin::new("sampled tangent gain", gain, 1.5f64.sqrt()));
    let guarantee = all_passed(&conditions);
    Ok(McDualityReport { conditions, guarantee })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_count_and_rates() {
        assert_eq!(mc_block_count(100), 24);
        assert_eq!(mc_block_count(80), 22);
        let rho = 0.6 * 0.96;
        let rates = mc_block_rates(rho, 22).unwrap();
        let survive: f64 = rates.iter().map(|q| 1.0 - q).product();
        assert!((survive - (1.0 - rho)).abs() < 1e-12);
        assert!(mc_block_rates(0.3, 2).is_err());
        assert!(mc_block_rates(1.0, 10).is_err());
    }

    #[test]
    fn blocks_cover_support() {
        let gp = Mask::from_fn(10, 10, |i, j| (i * 7 + j * 3) % 4 == 0);
        let blocks = split_blocks(&gp, &[0.2, 0.2, 0.3], 4);
        let union = blocks.iter().fold(Mask::empty(10, 10), |acc, b| acc.union(b));
        assert_eq!(union, gp);
    }
}
