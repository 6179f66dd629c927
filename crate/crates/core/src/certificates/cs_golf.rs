use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;

use super::{all_passed, Margin};
use crate::error::{invalid, Result};
use crate::linalg;
use crate::seed;

/// `⌊log₂ n + 1⌋`.
pub fn cs_block_count(n: usize) -> usize {
    ((n as f64).log2() + 1.0).floor() as usize
}

/// Sizes of the `l` blocks of `Bᶜ`: two blocks of `⌈|Bᶜ|/4⌉` followed by
/// `l − 2` blocks as equal as possible.
pub fn cs_partition(bc_len: usize, l: usize) -> Result<Vec<usize>> {
    if l == 0 || l > bc_len {
        return invalid(format!("cannot split {bc_len} rows into {l} nonempty blocks"));
    }
    let even = |total: usize, k: usize| -> Vec<usize> { (0..k).map(|i| total / k + usize::from(i < total % k)).collect() };
    if l <= 2 {
        return Ok(even(bc_len, l));
    }
    let big = bc_len.div_ceil(4);
    let rest = bc_len - 2 * big;
    if rest < l - 2 {
        return invalid(format!("cannot split {bc_len} rows into {l} nonempty blocks"));
    }
    let mut sizes = vec![big, big];
    sizes.extend(even(rest, l - 2));
    Ok(sizes)
}

#[derive(Clone, Debug)]
pub struct CsCertificate {
    /// Length `m`, zero on `B`.
    pub q: DVector<f64>,
    /// `A_{Bᶜ,:}ᵀq + λA_{B,:}ᵀsgn(f_B)`.
    pub v: DVector<f64>,
    /// `A_{Bᶜ,:}ᵀq`.
    pub u: DVector<f64>,
    /// `‖p_0‖₂, …, ‖p_l‖₂`.
    pub p_norms: Vec<f64>,
    /// `‖(m/m_i)A_{G_i,T}ᵀA_{G_i,T} − I‖` per block.
    pub gram_deviations: Vec<f64>,
    pub partition: Vec<usize>,
    pub blocks: Vec<Vec<usize>>,
    /// `‖u_T − (p_0 − p_l)‖₂`.
    pub telescoping_residual: f64,
    pub margins: Vec<Margin>,
}

impl CsCertificate {
    pub fn margins_pass(&self) -> bool {
        all_passed(&self.margins)
    }
}

fn check_inputs(
    a: &DMatrix<f64>,
    t: &[usize],
    b: &[usize],
    sgn_xt: &DVector<f64>,
    sgn_fb: &DVector<f64>,
) -> Result<()> {
    let (m, n) = a.shape();
    if t.iter().any(|&i| i >= n) || b.iter().any(|&i| i >= m) {
        return invalid("support index out of range");
    }
    if sgn_xt.len() != t.len() || sgn_fb.len() != b.len() {
        return invalid("sign vectors must match the support sizes");
    }
    Ok(())
}

fn margins(v: &DVector<f64>, q: &DVector<f64>, t: &[usize], sgn_xt: &DVector<f64>, lambda: f64) -> Vec<Margin> {
    let n = v.len();
    let on_t = (linalg::gather(v, t) - sgn_xt).norm();
    let off_t = linalg::complement(n, t).iter().map(|&i| v[i].abs()).fold(0.0, f64::max);
    vec![
        Margin::new("v_T - sgn(x_T) l2", on_t, lambda / 4.0),
        Margin::new("v_Tc linf", off_t, 0.25),
        Margin::new("q linf", q.amax(), lambda / 4.0),
    ]
}

fn sign_term(a: &DMatrix<f64>, b: &[usize], sgn_fb: &DVector<f64>, lambda: f64) -> DVector<f64> {
    linalg::select_rows(a, b).transpose() * sgn_fb * lambda
}

/// Golfing construction of an inexact dual vector for the noiseless program.
pub fn build_cs_certificate(
    a: &DMatrix<f64>,
    t: &[usize],
    b: &[usize],
    sgn_xt: &DVector<f64>,
    sgn_fb: &DVector<f64>,
    lambda: f64,
    seed: u64,
) -> Result<CsCertificate> {
    check_inputs(a, t, b, sgn_xt, sgn_fb)?;
    let (m, n) = a.shape();
    let mut bc = linalg::complement(m, b);
    let l = cs_block_count(n);
    let partition = cs_partition(bc.len(), l)?;
    bc.shuffle(&mut seed::rng(seed));
    let mut blocks = Vec::with_capacity(l);
    let mut start = 0;
    for &size in &partition {
        let mut blk = bc[start..start + size].to_vec();
        blk.sort_unstable();
        blocks.push(blk);
        start += size;
    }

    let a_t = linalg::select_cols(a, t);
    let s = t.len();
    let p0 = sgn_xt - linalg::select_rows(&a_t, b).transpose() * sgn_fb * lambda;
    let mut p = p0.clone();
    let mut q = DVector::zeros(m);
    let mut p_norms = vec![p.norm()];
    let mut gram_deviations = Vec::with_capacity(l);
    for blk in &blocks {
        let scale = m as f64 / blk.len() as f64;
        let a_gt = linalg::select_rows(&a_t, blk);
        let qg = &a_gt * &p * scale;
        let gram = a_gt.transpose() * &a_gt * scale;
        gram_deviations.push(if s == 0 { 0.0 } else { linalg::spectral_norm(&(&gram - DMatrix::identity(s, s)))? });
        p -= &gram * &p;
        for (k, &row) in blk.iter().enumerate() {
            q[row] = qg[k];
        }
        p_norms.push(p.norm());
    }
    let u = a.transpose() * &q;
    let v = &u + sign_term(a, b, sgn_fb, lambda);
    let telescoping_residual = (linalg::gather(&u, t) - (&p0 - &p)).norm();
    let margins = margins(&v, &q, t, sgn_xt, lambda);
    Ok(CsCertificate {
        q,
        v,
        u,
        p_norms,
        gram_deviations,
        partition,
        blocks,
        telescoping_residual,
        margins,
    })
}

#[derive(Clone, Debug)]
pub struct CsDualityReport {
    /// The three dual-vector margins followed by the standing assumptions.
    pub conditions: Vec<Margin>,
    /// Every condition holds, so the noiseless program recovers `(x, f)`.
    pub guarantee: bool,
}

/// Recomputes `v` from `cert.q` and checks the inexact-duality hypotheses.
pub fn verify_cs_inexact_duality(
    cert: &CsCertificate,
    a: &DMatrix<f64>,
    t: &[usize],
    b: &[usize],
    sgn_xt: &DVector<f64>,
    sgn_fb: &DVector<f64>,
    lambda: f64,
) -> Result<CsDualityReport> {
    check_inputs(a, t, b, sgn_xt, sgn_fb)?;
    let (m, n) = a.shape();
    if cert.q.len() != m {
        return invalid(format!("q has length {}, expected {m}", cert.q.len()));
    }
    // q lives on Bᶜ only
    let mut q = cert.q.clone();
    for &i in b {
        q[i] = 0.0;
    }
    let v = a.transpose() * &q + sign_term(a, b, sgn_fb, lambda);
    let mut conditions = margins(&v, &q, t, sgn_xt, lambda);

    let bc = linalg::complement(m, b);
    let ratio = m as f64 / bc.len().max(1) as f64;
    let a_bc = linalg::select_rows(a, &bc);
    let a_bct = linalg::select_cols(&a_bc, t);
    let gram_dev = if t.is_empty() {
        0.0
    } else {
        linalg::spectral_norm(&(a_bct.transpose() * &a_bct * ratio - DMatrix::identity(t.len(), t.len())))?
    };
    let a_bctt = a_bct.transpose();
    let cross = linalg::complement(n, t)
        .iter()
        .map(|&i| (&a_bctt * a_bc.column(i)).norm() * ratio)
        .fold(0.0, f64::max);
    conditions.push(Margin::new("restricted Gram deviation", gram_dev, 0.5));
    conditions.push(Margin::new("restricted cross-column norm", cross, 1.0));
    conditions.push(Margin::strict("lambda", lambda, 1.5));
    conditions.push(Margin::strict("m/(m - m_b)", ratio, 1.5));
    let guarantee = all_passed(&conditions);
    Ok(CsDualityReport { conditions, guarantee })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_counts_and_partition() {
        assert_eq!(cs_block_count(1024), 11);
        assert_eq!(cs_block_count(1023), 10);
        let p = cs_partition(502, 11).unwrap();
        assert_eq!(p.iter().sum::<usize>(), 502);
        assert_eq!(&p[..2], &[126, 126]);
        assert!(p.iter().all(|&k| k > 0));
        assert_eq!(cs_partition(5, 2).unwrap(), vec![3, 2]);
        assert!(cs_partition(3, 5).is_err());
    }

    #[test]
    fn empty_supports_are_vacuous() {
        let a = linalg::gaussian_matrix(12, 4, 1);
        let cert = build_cs_certificate(&a, &[], &[], &DVector::zeros(0), &DVector::zeros(0), 0.9, 0).unwrap();
        assert_eq!(cert.q.amax(), 0.0);
        let rep = verify_cs_inexact_duality(&cert, &a, &[], &[], &DVector::zeros(0), &DVector::zeros(0), 0.9).unwrap();
        assert!(rep.conditions[..3].iter().all(|c| c.passed));
    }
}
