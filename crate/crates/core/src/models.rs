//! Random models: sensing ensembles, sparse signals and corruptions,
//! low-rank matrices and the two Bernoulli mask processes used for
//! corrupted matrix completion.
//!
//! Every generator is a pure function of its arguments; the same seed
//! always yields bit-identical output.

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg;
use crate::mask::Mask;
use crate::seed::{self, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnsembleKind {
    /// iid N(0, 1/m) entries.
    GaussianIid,
    /// Rows `a/√m` with `a` iid ±1 entries.
    RademacherRows,
    /// Rows `a/√m` where `a` is a uniformly chosen, randomly signed,
    /// `√n`-scaled row of the orthonormal DCT-II basis.
    SubsampledDct,
}

impl EnsembleKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "gaussian" | "gaussian-iid" => Ok(EnsembleKind::GaussianIid),
            "rademacher" | "rademacher-rows" => Ok(EnsembleKind::RademacherRows),
            "dct" | "subsampled-dct" => Ok(EnsembleKind::SubsampledDct),
            other => invalid(format!("unknown ensemble kind {other:?}")),
        }
    }
}

/// An `m × n` measurement operator together with how it was drawn.
#[derive(Clone, Debug, PartialEq)]
pub struct SensingMatrix {
    pub data: DMatrix<f64>,
    pub kind: EnsembleKind,
    /// Coherence bound `‖a‖∞² ≤ μ` of the row distribution; `None` for the
    /// Gaussian ensemble.
    pub mu: Option<f64>,
    pub seed: u64,
}

impl SensingMatrix {
    pub fn m(&self) -> usize {
        self.data.nrows()
    }

    pub fn n(&self) -> usize {
        self.data.ncols()
    }
}

fn check_dims(m: usize, n: usize) -> Result<()> {
    if m == 0 || n == 0 {
        return invalid(format!("sensing matrix dimensions must be positive, got {m}x{n}"));
    }
    Ok(())
}

pub fn gen_gaussian_ensemble(m: usize, n: usize, seed: u64) -> Result<SensingMatrix> {
    check_dims(m, n)?;
    let scale = 1.0 / (m as f64).sqrt();
    Ok(SensingMatrix {
        data: linalg::gaussian_matrix(m, n, seed) * scale,
        kind: EnsembleKind::GaussianIid,
        mu: None,
        seed,
    })
}

/// Entry `k, j` of the orthonormal DCT-II basis of `Rⁿ`.
fn dct_entry(n: usize, k: usize, j: usize) -> f64 {
    let nf = n as f64;
    let scale = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
    scale * (std::f64::consts::PI * (j as f64 + 0.5) * k as f64 / nf).cos()
}

pub fn gen_row_ensemble(m: usize, n: usize, kind: EnsembleKind, seed: u64) -> Result<SensingMatrix> {
    check_dims(m, n)?;
    let mut rng = seed::rng(seed);
    let inv_sqrt_m = 1.0 / (m as f64).sqrt();
    let (data, mu) = match kind {
        EnsembleKind::RademacherRows => {
            let mut a = DMatrix::zeros(m, n);
            for i in 0..m {
                for j in 0..n {
                    a[(i, j)] = if rng.random::<bool>() { inv_sqrt_m } else { -inv_sqrt_m };
                }
            }
            (a, 1.0)
        }
        EnsembleKind::SubsampledDct => {
            let sqrt_n = (n as f64).sqrt();
            let mut a = DMatrix::zeros(m, n);
            for i in 0..m {
                let k = rng.random_range(0..n);
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                for j in 0..n {
                    a[(i, j)] = sign * sqrt_n * dct_entry(n, k, j) * inv_sqrt_m;
                }
            }
            (a, 2.0)
        }
        EnsembleKind::GaussianIid => {
            return invalid("gen_row_ensemble needs a bounded row ensemble (rademacher or dct)");
        }
    };
    Ok(SensingMatrix {
        data,
        kind,
        mu: Some(mu),
        seed,
    })
}

/// Any ensemble by kind.
pub fn gen_ensemble(m: usize, n: usize, kind: EnsembleKind, seed: u64) -> Result<SensingMatrix> {
    match kind {
        EnsembleKind::GaussianIid => gen_gaussian_ensemble(m, n, seed),
        _ => gen_row_ensemble(m, n, kind, seed),
    }
}

/// How the nonzero entries of a sparse vector are chosen.
#[derive(Clone, Debug, PartialEq)]
pub enum Magnitudes {
    /// iid symmetric ±1.
    RandomSigns,
    /// Explicit values, one per support index in order.
    Given(Vec<f64>),
}

pub fn gen_sparse_signal(
    n: usize,
    support: &[usize],
    magnitudes: &Magnitudes,
    seed: u64,
) -> Result<DVector<f64>> {
    if let Some(&bad) = support.iter().find(|&&i| i >= n) {
        return invalid(format!("support index {bad} out of range for length {n}"));
    }
    let mut v = DVector::zeros(n);
    match magnitudes {
        Magnitudes::RandomSigns => {
            let mut rng = seed::rng(seed);
            for &i in support {
                v[i] = if rng.random::<bool>() { 1.0 } else { -1.0 };
            }
        }
        Magnitudes::Given(values) => {
            if values.len() != support.len() {
                return invalid(format!(
                    "{} values given for a support of size {}",
                    values.len(),
                    support.len()
                ));
            }
            for (&i, &x) in support.iter().zip(values) {
                v[i] = x;
            }
        }
    }
    Ok(v)
}

/// Uniformly random `k`-subset of `[0, n)`, sorted.
pub fn random_support(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k > n {
        return invalid(format!("cannot draw a support of size {k} from {n} indices"));
    }
    let mut rng = seed::rng(seed);
    let mut idx = index::sample(&mut rng, n, k).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

pub(crate) fn support_of(v: &DVector<f64>) -> Vec<usize> {
    v.iter()
        .enumerate()
        .filter(|(_, x)| **x != 0.0)
        .map(|(i, _)| i)
        .collect()
}

/// Ground truth and measurements for `y = Ax + f + w`.
#[derive(Clone, Debug)]
pub struct CsInstance {
    pub a: SensingMatrix,
    pub x_true: DVector<f64>,
    pub f_true: DVector<f64>,
    pub w: DVector<f64>,
    pub y: DVector<f64>,
    pub epsilon: f64,
    /// Support `T` of `x_true`.
    pub support_x: Vec<usize>,
    /// Support `B` of `f_true`.
    pub support_f: Vec<usize>,
}

pub fn assemble_cs_instance(
    a: SensingMatrix,
    x: DVector<f64>,
    f: DVector<f64>,
    w: DVector<f64>,
    epsilon: f64,
) -> Result<CsInstance> {
    let (m, n) = a.data.shape();
    if x.len() != n || f.len() != m || w.len() != m {
        return invalid(format!(
            "shape mismatch: A is {m}x{n}, x has {}, f has {}, w has {}",
            x.len(),
            f.len(),
            w.len()
        ));
    }
    if !(epsilon >= 0.0) {
        return invalid(format!("epsilon must be non-negative, got {epsilon}"));
    }
    if w.norm() > epsilon * (1.0 + 1e-12) {
        return invalid(format!("noise norm {} exceeds epsilon {epsilon}", w.norm()));
    }
    let y = &a.data * &x + &f + &w;
    Ok(CsInstance {
        support_x: support_of(&x),
        support_f: support_of(&f),
        a,
        x_true: x,
        f_true: f,
        w,
        y,
        epsilon,
    })
}

/// Uniformly random direction scaled to norm exactly `norm`.
pub fn noise_of_norm(len: usize, norm: f64, seed: u64) -> DVector<f64> {
    if norm == 0.0 || len == 0 {
        return DVector::zeros(len);
    }
    let mut rng = seed::rng(seed);
    let g: DVector<f64> = DVector::from_fn(len, |_, _| StandardNormal.sample(&mut rng));
    let gn = g.norm();
    g * (norm / gn)
}

/// Draws a full instance: random supports of sizes `k_x` and `k_f`, ±1
/// entries on both, and noise of norm exactly `epsilon`.
pub fn gen_cs_instance(
    kind: EnsembleKind,
    m: usize,
    n: usize,
    k_x: usize,
    k_f: usize,
    epsilon: f64,
    seed: u64,
) -> Result<CsInstance> {
    let a = gen_ensemble(m, n, kind, seed::stream(seed, 1))?;
    let t = random_support(n, k_x, seed::stream(seed, 2))?;
    let b = random_support(m, k_f, seed::stream(seed, 3))?;
    let x = gen_sparse_signal(n, &t, &Magnitudes::RandomSigns, seed::stream(seed, 4))?;
    let f = gen_sparse_signal(m, &b, &Magnitudes::RandomSigns, seed::stream(seed, 5))?;
    let w = noise_of_norm(m, epsilon, seed::stream(seed, 6));
    assemble_cs_instance(a, x, f, w, epsilon)
}

/// Singular values used for the low-rank component.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SingularProfile {
    /// All singular values equal to one.
    #[default]
    Unit,
    /// Geometric from 1 down to `1/condition`.
    LogSpaced { condition: f64 },
}

#[derive(Clone, Debug)]
pub struct LowRank {
    pub u: DMatrix<f64>,
    pub sigma: DVector<f64>,
    pub v: DMatrix<f64>,
    pub l: DMatrix<f64>,
}

pub fn gen_mc_lowrank(n: usize, r: usize, seed: u64) -> Result<LowRank> {
    gen_mc_lowrank_with(n, r, SingularProfile::Unit, seed)
}

pub fn gen_mc_lowrank_with(n: usize, r: usize, profile: SingularProfile, seed: u64) -> Result<LowRank> {
    if r == 0 || r > n {
        return invalid(format!("rank must satisfy 1 <= r <= n, got r={r}, n={n}"));
    }
    let u = linalg::orthonormalize(linalg::gaussian_matrix(n, r, seed::stream(seed, 1)));
    let v = linalg::orthonormalize(linalg::gaussian_matrix(n, r, seed::stream(seed, 2)));
    let sigma = match profile {
        SingularProfile::Unit => DVector::from_element(r, 1.0),
        SingularProfile::LogSpaced { condition } => {
            if !(condition >= 1.0) {
                return invalid(format!("condition number must be >= 1, got {condition}"));
            }
            DVector::from_fn(r, |i, _| {
                if r == 1 {
                    1.0
                } else {
                    condition.powf(-(i as f64) / (r - 1) as f64)
                }
            })
        }
    };
    let l = &u * DMatrix::from_diagonal(&sigma) * v.transpose();
    Ok(LowRank { u, sigma, v, l })
}

/// Smallest `μ` with `‖UU*eᵢ‖² ≤ μr/n`, `‖VV*eᵢ‖² ≤ μr/n` and
/// `‖UV*‖∞ ≤ √(μr)/n` for all `i`.
pub fn compute_incoherence(u: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<f64> {
    let (n, r) = u.shape();
    if v.shape() != (n, r) {
        return invalid(format!("U is {:?} but V is {:?}", u.shape(), v.shape()));
    }
    if r == 0 {
        return invalid("incoherence is undefined for rank 0");
    }
    let eye = DMatrix::<f64>::identity(r, r);
    for (name, m) in [("U", u), ("V", v)] {
        let dev = linalg::max_abs(&(m.transpose() * m - &eye));
        if dev > 1e-8 {
            return invalid(format!("{name} columns are not orthonormal (Gram deviation {dev:e})"));
        }
    }
    let nf = n as f64;
    let rf = r as f64;
    let row_mass = |m: &DMatrix<f64>| (0..n).map(|i| m.row(i).norm_squared()).fold(0.0, f64::max);
    let mu_u = nf * row_mass(u) / rf;
    let mu_v = nf * row_mass(v) / rf;
    let uv = u * v.transpose();
    let mu_uv = nf * nf * linalg::max_abs(&uv).powi(2) / rf;
    Ok(mu_u.max(mu_v).max(mu_uv))
}

/// Magnitudes of the corruption matrix `S` on `Ω` (its signs come from `K`).
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorruptionMagnitudes {
    #[default]
    Unit,
    /// iid uniform in `[0.5, 2]`.
    Uniform,
}

fn corruption_matrix(
    omega: &Mask,
    k: &DMatrix<f64>,
    magnitudes: CorruptionMagnitudes,
    rng: &mut Rng,
) -> DMatrix<f64> {
    let (n1, n2) = omega.shape();
    let mut s = DMatrix::zeros(n1, n2);
    for (i, j) in omega.iter() {
        let mag = match magnitudes {
            CorruptionMagnitudes::Unit => 1.0,
            CorruptionMagnitudes::Uniform => rng.random_range(0.5..=2.0),
        };
        s[(i, j)] = k[(i, j)].signum() * mag;
    }
    s
}

/// `Ber(p)` subset of an `n × n` grid.
pub fn bernoulli_mask(n: usize, p: f64, seed: u64) -> Result<Mask> {
    if !(0.0..=1.0).contains(&p) {
        return invalid(format!("inclusion probability must lie in [0, 1], got {p}"));
    }
    let mut rng = seed::rng(seed);
    Ok(Mask::from_fn(n, n, |_, _| rng.random::<f64>() < p))
}

/// iid ±1 sign matrix.
pub fn random_sign_matrix(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = seed::rng(seed);
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            k[(i, j)] = if rng.random::<bool>() { 1.0 } else { -1.0 };
        }
    }
    k
}

fn check_signs(n: usize, k: &DMatrix<f64>) -> Result<()> {
    if k.shape() != (n, n) {
        return invalid(format!("sign matrix is {:?}, expected {n}x{n}", k.shape()));
    }
    if k.iter().any(|&x| x != 1.0 && x != -1.0) {
        return invalid("sign matrix entries must be +1 or -1");
    }
    Ok(())
}

/// Masks and corruption drawn under the first (direct) Bernoulli model.
#[derive(Clone, Debug)]
pub struct DirectMasks {
    pub o: Mask,
    pub omega: Mask,
    pub gamma: Mask,
    pub s: DMatrix<f64>,
}

/// `O ~ Ber(ρ)`; given `(i,j) ∈ O`, `(i,j) ∈ Ω` with probability `s`;
/// `Γ = O ∖ Ω`; `sgn(S) = P_Ω(K)`.
pub fn sample_direct_masks(
    n: usize,
    rho: f64,
    s: f64,
    k: &DMatrix<f64>,
    magnitudes: CorruptionMagnitudes,
    seed: u64,
) -> Result<DirectMasks> {
    if !(rho > 0.0 && rho < 0.5) {
        return invalid(format!("rho must lie in (0, 1/2), got {rho}"));
    }
    sample_bernoulli_masks(n, rho, s, k, magnitudes, seed)
}

/// Same process as [`sample_direct_masks`] without the `ρ < 1/2` restriction
/// (any `ρ ∈ (0, 1]`), for experiments that probe outside the theorem's
/// regime.
pub fn sample_bernoulli_masks(
    n: usize,
    rho: f64,
    s: f64,
    k: &DMatrix<f64>,
    magnitudes: CorruptionMagnitudes,
    seed: u64,
) -> Result<DirectMasks> {
    if !(rho > 0.0 && rho <= 1.0) {
        return invalid(format!("rho must lie in (0, 1], got {rho}"));
    }
    if !(0.0..1.0).contains(&s) {
        return invalid(format!("s must lie in [0, 1), got {s}"));
    }
    check_signs(n, k)?;
    let mut rng = seed::rng(seed);
    let mut o = Mask::empty(n, n);
    let mut omega = Mask::empty(n, n);
    for i in 0..n {
        for j in 0..n {
            let u_obs: f64 = rng.random();
            let u_cor: f64 = rng.random();
            if u_obs < rho {
                o.insert(i, j);
                if u_cor < s {
                    omega.insert(i, j);
                }
            }
        }
    }
    let gamma = o.difference(&omega);
    let s_mat = corruption_matrix(&omega, k, magnitudes, &mut rng);
    Ok(DirectMasks {
        o,
        omega,
        gamma,
        s: s_mat,
    })
}

/// Masks drawn under the auxiliary model whose `(O, Ω)` law coincides with
/// [`sample_direct_masks`], keeping `Γ′`, `Ω′` and `W` around for certificate
/// construction.
#[derive(Clone, Debug)]
pub struct AuxiliaryMasks {
    pub gamma_prime: Mask,
    pub omega_prime: Mask,
    pub w: DMatrix<f64>,
    pub omega: Mask,
    pub o: Mask,
    pub gamma: Mask,
    pub s: DMatrix<f64>,
}

pub fn sample_auxiliary_masks(
    n: usize,
    rho: f64,
    s: f64,
    k: &DMatrix<f64>,
    magnitudes: CorruptionMagnitudes,
    seed: u64,
) -> Result<AuxiliaryMasks> {
    if !(rho > 0.0 && rho < 0.5) {
        return invalid(format!("rho must lie in (0, 1/2), got {rho}"));
    }
    sample_auxiliary_masks_unrestricted(n, rho, s, k, magnitudes, seed)
}

/// Same construction as [`sample_auxiliary_masks`] for any `ρ ∈ (0, 1)`; the
/// law of `(O, Ω)` still matches [`sample_bernoulli_masks`].
pub fn sample_auxiliary_masks_unrestricted(
    n: usize,
    rho: f64,
    s: f64,
    k: &DMatrix<f64>,
    magnitudes: CorruptionMagnitudes,
    seed: u64,
) -> Result<AuxiliaryMasks> {
    if !(rho > 0.0 && rho < 1.0) {
        return invalid(format!("rho must lie in (0, 1), got {rho}"));
    }
    if !(0.0..0.5).contains(&s) {
        return invalid(format!("s must lie in [0, 1/2), got {s}"));
    }
    check_signs(n, k)?;
    let p_gamma = (1.0 - 2.0 * s) * rho;
    let p_omega = 2.0 * s * rho / (1.0 - rho + 2.0 * s * rho);
    let mut rng = seed::rng(seed);
    let mut gamma_prime = Mask::empty(n, n);
    let mut omega_prime = Mask::empty(n, n);
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let ug: f64 = rng.random();
            let uo: f64 = rng.random();
            let sign: bool = rng.random();
            if ug < p_gamma {
                gamma_prime.insert(i, j);
            }
            if uo < p_omega {
                omega_prime.insert(i, j);
            }
            w[(i, j)] = if sign { 1.0 } else { -1.0 };
        }
    }
    let omega_pp = Mask::from_fn(n, n, |i, j| omega_prime.contains(i, j) && w[(i, j)] == k[(i, j)]);
    let omega = omega_pp.difference(&gamma_prime);
    let o = gamma_prime.union(&omega_prime);
    let gamma = o.difference(&omega);
    let s_mat = corruption_matrix(&omega, k, magnitudes, &mut rng);
    Ok(AuxiliaryMasks {
        gamma_prime,
        omega_prime,
        w,
        omega,
        o,
        gamma,
        s: s_mat,
    })
}

/// `Γ′`, `Ω′` and `W` from the auxiliary model.
#[derive(Clone, Debug)]
pub struct AuxiliaryParts {
    pub gamma_prime: Mask,
    pub omega_prime: Mask,
    pub w: DMatrix<f64>,
}

/// A complete corrupted matrix-completion instance.
#[derive(Clone, Debug)]
pub struct McInstance {
    pub n: usize,
    pub r: usize,
    pub u: DMatrix<f64>,
    pub sigma: DVector<f64>,
    pub v: DMatrix<f64>,
    pub l: DMatrix<f64>,
    pub mu: f64,
    pub o: Mask,
    pub omega: Mask,
    pub gamma: Mask,
    pub k: DMatrix<f64>,
    pub s: DMatrix<f64>,
    /// `P_O(L) + S`.
    pub m_obs: DMatrix<f64>,
    pub rho: f64,
    pub s_rate: f64,
    pub aux: Option<AuxiliaryParts>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaskModel {
    /// Direct Bernoulli model, `ρ < 1/2` enforced.
    Direct,
    /// Auxiliary model (keeps `Γ′, Ω′, W`).
    Auxiliary,
    /// Direct model with any `ρ ∈ (0, 1]`.
    Bernoulli,
    /// Auxiliary model with any `ρ ∈ (0, 1)`.
    AuxiliaryUnrestricted,
}

#[derive(Clone, Copy, Debug)]
pub struct McParams {
    pub n: usize,
    pub r: usize,
    pub rho: f64,
    pub s: f64,
    pub magnitudes: CorruptionMagnitudes,
    pub profile: SingularProfile,
}

impl McParams {
    pub fn new(n: usize, r: usize, rho: f64, s: f64) -> Self {
        McParams {
            n,
            r,
            rho,
            s,
            magnitudes: CorruptionMagnitudes::Unit,
            profile: SingularProfile::Unit,
        }
    }
}

/// Draws `L`, a sign matrix `K` (iid ±1 unless supplied) and the masks.
pub fn gen_mc_instance(
    params: &McParams,
    model: MaskModel,
    k: Option<&DMatrix<f64>>,
    seed: u64,
) -> Result<McInstance> {
    let n = params.n;
    let lr = gen_mc_lowrank_with(n, params.r, params.profile, seed::stream(seed, 1))?;
    let k = match k {
        Some(k) => k.clone(),
        None => random_sign_matrix(n, seed::stream(seed, 2)),
    };
    let mask_seed = seed::stream(seed, 3);
    let (o, omega, gamma, s, aux) = match model {
        MaskModel::Direct | MaskModel::Bernoulli => {
            let smp = if model == MaskModel::Direct {
                sample_direct_masks(n, params.rho, params.s, &k, params.magnitudes, mask_seed)?
            } else {
                sample_bernoulli_masks(n, params.rho, params.s, &k, params.magnitudes, mask_seed)?
            };
            (smp.o, smp.omega, smp.gamma, smp.s, None)
        }
        MaskModel::Auxiliary | MaskModel::AuxiliaryUnrestricted => {
            let smp = if model == MaskModel::Auxiliary {
                sample_auxiliary_masks(n, params.rho, params.s, &k, params.magnitudes, mask_seed)?
            } else {
                sample_auxiliary_masks_unrestricted(n, params.rho, params.s, &k, params.magnitudes, mask_seed)?
            };
            let aux = AuxiliaryParts {
                gamma_prime: smp.gamma_prime,
                omega_prime: smp.omega_prime,
                w: smp.w,
            };
            (smp.o, smp.omega, smp.gamma, smp.s, Some(aux))
        }
    };
    let m_obs = o.apply(&lr.l) + &s;
    let mu = compute_incoherence(&lr.u, &lr.v)?;
    Ok(McInstance {
        n,
        r: params.r,
        u: lr.u,
        sigma: lr.sigma,
        v: lr.v,
        l: lr.l,
        mu,
        o,
        omega,
        gamma,
        k,
        s,
        m_obs,
        rho: params.rho,
        s_rate: params.s,
        aux,
    })
}
