//! Proximal maps and projections used by both solvers and the certificate
//! builders.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{invalid, Error, Result};
use crate::linalg::{SVD_EPS, SVD_MAX_ITERS};

pub use crate::mask::pmask_apply;

/// Scalar soft-thresholding `sign(v)·max(|v| − τ, 0)`.
#[inline]
pub fn soft_threshold(v: f64, tau: f64) -> f64 {
    if v > tau {
        v - tau
    } else if v < -tau {
        v + tau
    } else {
        0.0
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau >= 0.0) {
        return invalid(format!("threshold must be non-negative, got {tau}"));
    }
    Ok(())
}

/// Elementwise soft-thresholding of a vector.
pub fn shrink(v: &DVector<f64>, tau: f64) -> Result<DVector<f64>> {
    check_tau(tau)?;
    Ok(v.map(|x| soft_threshold(x, tau)))
}

/// Elementwise soft-thresholding of a matrix.
pub fn shrink_matrix(m: &DMatrix<f64>, tau: f64) -> Result<DMatrix<f64>> {
    check_tau(tau)?;
    Ok(m.map(|x| soft_threshold(x, tau)))
}

/// Singular value thresholding: `U·shrink(Σ, τ)·V*`. Returns the result
/// and its rank (number of singular values above `τ`).
pub fn svt(m: &DMatrix<f64>, tau: f64) -> Result<(DMatrix<f64>, usize)> {
    check_tau(tau)?;
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Ok((m.clone(), 0));
    }
    let svd = m
        .clone()
        .try_svd(true, true, SVD_EPS, SVD_MAX_ITERS)
        .ok_or_else(|| Error::Numerical("SVD did not converge in svt".into()))?;
    let u = svd.u.as_ref().expect("requested U");
    let v_t = svd.v_t.as_ref().expect("requested V*");
    let mut out = DMatrix::zeros(rows, cols);
    let mut rank = 0;
    for (k, &s) in svd.singular_values.iter().enumerate() {
        let shrunk = s - tau;
        if shrunk > 0.0 {
            rank += 1;
            out.ger(shrunk, &u.column(k), &v_t.row(k).transpose(), 1.0);
        }
    }
    Ok((out, rank))
}

/// Projection onto `{(x, f) : Ax + f = y}`, i.e. the affine set
/// `Φz = y` with `Φ = [A, I]`. `AA* + I` is factored once.
#[derive(Clone, Debug)]
pub struct AffineProjector {
    a: DMatrix<f64>,
    gram: Cholesky<f64, Dyn>,
    y: DVector<f64>,
}

impl AffineProjector {
    pub fn new(a: &DMatrix<f64>, y: &DVector<f64>) -> Result<Self> {
        if y.len() != a.nrows() {
            return invalid(format!("y has length {}, A has {} rows", y.len(), a.nrows()));
        }
        let gram = a * a.transpose() + DMatrix::identity(a.nrows(), a.nrows());
        let gram = Cholesky::new(gram)
            .ok_or_else(|| Error::Numerical("Cholesky of AA* + I failed".into()))?;
        Ok(AffineProjector {
            a: a.clone(),
            gram,
            y: y.clone(),
        })
    }

    pub fn n(&self) -> usize {
        self.a.ncols()
    }

    pub fn m(&self) -> usize {
        self.a.nrows()
    }

    /// `Φz = A z_x + z_f`.
    pub fn apply_phi(&self, z: &DVector<f64>) -> DVector<f64> {
        let n = self.n();
        &self.a * z.rows(0, n) + z.rows(n, self.m())
    }

    /// `Φ*u = (A*u, u)`.
    pub fn apply_phi_adjoint(&self, u: &DVector<f64>) -> DVector<f64> {
        let n = self.n();
        let mut out = DVector::zeros(n + self.m());
        out.rows_mut(0, n).copy_from(&(self.a.transpose() * u));
        out.rows_mut(n, self.m()).copy_from(u);
        out
    }

    /// `z − Φ*(AA* + I)⁻¹(Φz − y)`.
    pub fn project(&self, z: &DVector<f64>) -> DVector<f64> {
        let residual = self.apply_phi(z) - &self.y;
        let correction = self.gram.solve(&residual);
        z - self.apply_phi_adjoint(&correction)
    }
}

pub fn project_affine(z: &DVector<f64>, proj: &AffineProjector) -> Result<DVector<f64>> {
    if z.len() != proj.n() + proj.m() {
        return invalid(format!("z has length {}, expected {}", z.len(), proj.n() + proj.m()));
    }
    Ok(proj.project(z))
}

/// Euclidean projection of `r` onto the ball of radius `eps` around `center`.
pub fn project_ball(r: &DVector<f64>, center: &DVector<f64>, eps: f64) -> DVector<f64> {
    let d = r - center;
    let dist = d.norm();
    if dist <= eps {
        r.clone()
    } else {
        center + d * (eps / dist)
    }
}

/// Orthogonal projector onto the tangent space
/// `T = {UX* + YV*}` of rank-`r` matrices at `UΣV*`.
#[derive(Clone, Debug)]
pub struct TangentProjector {
    u: DMatrix<f64>,
    v: DMatrix<f64>,
}

impl TangentProjector {
    /// `u`, `v` must be `n × r` with orthonormal columns (`r = 0` allowed).
    pub fn new(u: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<Self> {
        if u.ncols() != v.ncols() {
            return invalid(format!("U has {} columns, V has {}", u.ncols(), v.ncols()));
        }
        Ok(TangentProjector {
            u: u.clone(),
            v: v.clone(),
        })
    }

    pub fn rank(&self) -> usize {
        self.u.ncols()
    }

    fn check(&self, x: &DMatrix<f64>) -> Result<()> {
        if x.nrows() != self.u.nrows() || x.ncols() != self.v.nrows() {
            return invalid(format!(
                "matrix is {:?}, projector acts on {}x{}",
                x.shape(),
                self.u.nrows(),
                self.v.nrows()
            ));
        }
        Ok(())
    }

    /// `UU*X + XVV* − UU*XVV*`, computed in `O(n²r)`.
    pub fn project(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        if self.rank() == 0 {
            return DMatrix::zeros(x.nrows(), x.ncols());
        }
        let ut_x = self.u.transpose() * x; // r × n2
        let x_v = x * &self.v; // n1 × r
        let ut_x_v = &ut_x * &self.v; // r × r
        // UU*X + (X V − U U*X V) V*
        let left = &self.u * ut_x;
        let right = (x_v - &self.u * ut_x_v) * self.v.transpose();
        left + right
    }

    /// `(I − UU*)X(I − VV*)`.
    pub fn project_perp(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        x - self.project(x)
    }
}

pub fn pt_apply(p: &TangentProjector, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    p.check(x)?;
    Ok(p.project(x))
}

pub fn ptperp_apply(p: &TangentProjector, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    p.check(x)?;
    Ok(p.project_perp(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{self, gaussian_matrix};
    use crate::models::gen_mc_lowrank;
    use proptest::prelude::*;

    #[test]
    fn scalar_shrink_cases() {
        let v = DVector::from_vec(vec![3.0, -0.5, 0.25, -4.0]);
        let s = shrink(&v, 1.0).unwrap();
        assert_eq!(s[0], 2.0);
        assert_eq!(s[1], 0.0);
        assert_eq!(s[3], -3.0);
        assert_eq!(shrink(&v, 0.0).unwrap(), v);
        assert!(shrink(&v, -1.0).is_err());
    }

    #[test]
    fn svt_diagonal_and_identity() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0]));
        let (out, rank) = svt(&d, 2.0).unwrap();
        assert!((out - DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0]))).norm() < 1e-12);
        assert_eq!(rank, 1);
        let m = gaussian_matrix(7, 5, 2);
        let (back, _) = svt(&m, 0.0).unwrap();
        assert!((back - &m).norm() < 1e-10);
    }

    #[test]
    fn svt_shrinks_singular_values() {
        let m = gaussian_matrix(9, 9, 4);
        let sv = linalg::singular_values(&m).unwrap();
        let tau = sv.mean();
        let (out, rank) = svt(&m, tau).unwrap();
        assert_eq!(rank, sv.iter().filter(|&&s| s > tau).count());
        let mut got: Vec<f64> = linalg::singular_values(&out).unwrap().iter().copied().collect();
        let mut want: Vec<f64> = sv.iter().map(|&s| (s - tau).max(0.0)).collect();
        got.sort_by(|a, b| b.total_cmp(a));
        want.sort_by(|a, b| b.total_cmp(a));
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-8);
        }
        let sv_out = linalg::singular_values(&out).unwrap();
        let numerical_rank = sv_out.iter().filter(|&&s| s > 1e-10).count();
        assert_eq!(numerical_rank, rank);
    }

    #[test]
    fn affine_projection_scalar_case() {
        let a = DMatrix::from_element(1, 1, 1.0);
        let y = DVector::from_element(1, 3.0);
        let p = AffineProjector::new(&a, &y).unwrap();
        let z = project_affine(&DVector::zeros(2), &p).unwrap();
        assert!((z[0] - 1.5).abs() < 1e-15 && (z[1] - 1.5).abs() < 1e-15);
    }

    #[test]
    fn affine_projection_fixes_feasible_points() {
        let a = gaussian_matrix(4, 7, 1);
        let x = gaussian_matrix(7, 1, 2).column(0).into_owned();
        let f = gaussian_matrix(4, 1, 3).column(0).into_owned();
        let y = &a * &x + &f;
        let p = AffineProjector::new(&a, &y).unwrap();
        let mut z = DVector::zeros(11);
        z.rows_mut(0, 7).copy_from(&x);
        z.rows_mut(7, 4).copy_from(&f);
        assert!((p.project(&z) - &z).norm() < 1e-12);
        let w = gaussian_matrix(11, 1, 4).column(0).into_owned();
        let once = p.project(&w);
        let twice = p.project(&once);
        assert!((&once - twice).norm() < 1e-12);
        assert!((p.apply_phi(&once) - &y).norm() <= 1e-10 * (1.0 + y.norm()));
    }

    #[test]
    fn ball_projection() {
        let c = DVector::zeros(2);
        let r = DVector::from_vec(vec![3.0, 4.0]);
        let p = project_ball(&r, &c, 1.0);
        assert!((p[0] - 0.6).abs() < 1e-15 && (p[1] - 0.8).abs() < 1e-15);
        assert_eq!(project_ball(&c, &c, 1.0), c);
        assert_eq!(project_ball(&r, &c, 0.0), c);
    }

    #[test]
    fn tangent_projection_cases() {
        let x = gaussian_matrix(5, 5, 3);
        let empty = TangentProjector::new(&DMatrix::zeros(5, 0), &DMatrix::zeros(5, 0)).unwrap();
        assert_eq!(pt_apply(&empty, &x).unwrap(), DMatrix::zeros(5, 5));
        assert_eq!(ptperp_apply(&empty, &x).unwrap(), x);

        let e1 = DMatrix::from_fn(5, 1, |i, _| if i == 0 { 1.0 } else { 0.0 });
        let p = TangentProjector::new(&e1, &e1).unwrap();
        let x11 = &e1 * e1.transpose();
        assert!((pt_apply(&p, &x11).unwrap() - &x11).norm() < 1e-15);
        assert!(pt_apply(&p, &DMatrix::zeros(4, 5)).is_err());
    }

    #[test]
    fn tangent_projection_explicit_formula() {
        let lr = gen_mc_lowrank(8, 2, 5).unwrap();
        let p = TangentProjector::new(&lr.u, &lr.v).unwrap();
        let x = gaussian_matrix(8, 8, 6);
        let uu = &lr.u * lr.u.transpose();
        let vv = &lr.v * lr.v.transpose();
        let explicit = &uu * &x + &x * &vv - &uu * &x * &vv;
        assert!((p.project(&x) - explicit).norm() < 1e-12);
        let eye = DMatrix::<f64>::identity(8, 8);
        let perp = (&eye - &uu) * &x * (&eye - &vv);
        assert!((p.project_perp(&x) - perp).norm() < 1e-12);
        assert!(linalg::spectral_norm(&p.project_perp(&x)).unwrap() <= linalg::spectral_norm(&x).unwrap() + 1e-12);
    }

    proptest! {
        #[test]
        fn shrink_is_nonexpansive(a in prop::collection::vec(-5.0..5.0f64, 6),
                                  b in prop::collection::vec(-5.0..5.0f64, 6),
                                  tau in 0.0..3.0f64) {
            let a = DVector::from_vec(a);
            let b = DVector::from_vec(b);
            let d = (shrink(&a, tau).unwrap() - shrink(&b, tau).unwrap()).norm();
            prop_assert!(d <= (a - b).norm() + 1e-12);
        }

        #[test]
        fn tangent_projectors_are_complementary_and_self_adjoint(seed in 0u64..1000) {
            let lr = gen_mc_lowrank(7, 2, seed).unwrap();
            let p = TangentProjector::new(&lr.u, &lr.v).unwrap();
            let x = gaussian_matrix(7, 7, seed + 1);
            let y = gaussian_matrix(7, 7, seed + 2);
            let px = p.project(&x);
            prop_assert!((p.project(&px) - &px).norm() < 1e-10);
            prop_assert!(p.project(&p.project_perp(&x)).norm() < 1e-10);
            prop_assert!((&px + p.project_perp(&x) - &x).norm() < 1e-10);
            prop_assert!((px.dot(&y) - x.dot(&p.project(&y))).abs() < 1e-10);
        }

        #[test]
        fn affine_projection_is_self_adjoint_about_its_linear_part(seed in 0u64..1000) {
            let a = gaussian_matrix(3, 5, seed);
            // with y = 0 the projector is linear
            let p = AffineProjector::new(&a, &DVector::zeros(3)).unwrap();
            let u = gaussian_matrix(8, 1, seed + 1).column(0).into_owned();
            let v = gaussian_matrix(8, 1, seed + 2).column(0).into_owned();
            prop_assert!((p.project(&u).dot(&v) - u.dot(&p.project(&v))).abs() < 1e-10);
        }

        #[test]
        fn mask_projection_is_self_adjoint(seed in 0u64..1000) {
            let m = crate::mask::Mask::from_fn(5, 5, |i, j| (i * 7 + j * 3 + seed as usize) % 4 == 0);
            let x = gaussian_matrix(5, 5, seed);
            let y = gaussian_matrix(5, 5, seed + 7);
            prop_assert!((m.apply(&x).dot(&y) - x.dot(&m.apply(&y))).abs() < 1e-12);
        }
    }
}
