//! Dense regularized least-squares kernels.
//!
//! Both solvers reduce to a symmetric positive (semi)definite system and go
//! through a Cholesky factorization with one step of iterative refinement.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Dense real matrix. Storage is column-major (nalgebra); indexing is `(row, col)`.
pub type DenseMatrix = DMatrix<f64>;

/// Relative pivot threshold below which an unregularized Gram system is
/// treated as singular.
const SINGULAR_PIVOT_RATIO: f64 = 1e3 * f64::EPSILON;

pub(crate) fn check_finite_matrix(m: &DMatrix<f64>, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub(crate) fn check_finite_vector(v: &DVector<f64>, what: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma.is_finite() && gamma >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("regularization must be finite and >= 0, got {gamma}")))
    }
}

/// `AᵀA`, made exactly symmetric by mirroring the upper triangle.
pub fn gram(a: &DMatrix<f64>) -> DMatrix<f64> {
    // an explicit transpose lets the product go through the blocked GEMM kernel
    let mut g = a.transpose() * a;
    let p = g.nrows();
    for j in 0..p {
        for i in 0..j {
            g[(j, i)] = g[(i, j)];
        }
    }
    g
}

/// `AAᵀ` for a short, wide matrix.
pub fn outer_gram(a: &DMatrix<f64>) -> DMatrix<f64> {
    gram(&a.transpose())
}

/// Solves `S x = b` for a symmetric positive definite `S`.
///
/// `regularized` tells whether `S` carries a positive diagonal shift; without
/// one, a factorization whose smallest pivot is negligible against the
/// largest is rejected as [`Error::SingularSystem`].
pub fn solve_spd(s: &DMatrix<f64>, b: &DVector<f64>, regularized: bool) -> Result<DVector<f64>> {
    let n = s.nrows();
    if n == 0 {
        return Ok(DVector::zeros(0));
    }
    let chol = factor_spd(s, regularized)?;
    let mut x = chol.solve(b);
    // One refinement sweep cleans up most of the rounding left by the normal equations.
    let r = b - s * &x;
    x += chol.solve(&r);
    check_finite_vector(&x, "linear solve")?;
    Ok(x)
}

pub(crate) fn factor_spd(s: &DMatrix<f64>, regularized: bool) -> Result<Cholesky<f64, Dyn>> {
    let chol = Cholesky::new(s.clone()).ok_or(Error::SingularSystem)?;
    if !regularized {
        let l = chol.l_dirty();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
        for i in 0..s.nrows() {
            let d = l[(i, i)] * l[(i, i)];
            lo = lo.min(d);
            hi = hi.max(d);
        }
        if !(lo > SINGULAR_PIVOT_RATIO * hi) {
            return Err(Error::SingularSystem);
        }
    }
    Ok(chol)
}

/// Tikhonov-regularized least squares: solves `(AᵀA + γI) x = Aᵀb`.
pub fn tikhonov_solve(a: &DMatrix<f64>, b: &DVector<f64>, gamma: f64) -> Result<DVector<f64>> {
    if a.nrows() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "matrix has {} rows but right-hand side has {} entries",
            a.nrows(),
            b.len()
        )));
    }
    check_gamma(gamma)?;
    check_finite_matrix(a, "tikhonov_solve matrix")?;
    check_finite_vector(b, "tikhonov_solve right-hand side")?;

    let mut normal = gram(a);
    for i in 0..normal.nrows() {
        normal[(i, i)] += gamma;
    }
    let rhs = a.tr_mul(b);
    solve_spd(&normal, &rhs, gamma > 0.0)
}

/// Applies the regularized pseudo-inverse `Jᵀ(JJᵀ + γ̃I)⁻¹` to `resid`.
///
/// With `gamma_t = 0` this is the minimum-norm solution of `J x = resid`.
pub fn reg_pinv_apply(j: &DMatrix<f64>, resid: &DVector<f64>, gamma_t: f64) -> Result<DVector<f64>> {
    if j.nrows() != resid.len() {
        return Err(Error::DimensionMismatch(format!(
            "Jacobian has {} rows but residual has {} entries",
            j.nrows(),
            resid.len()
        )));
    }
    check_gamma(gamma_t)?;
    check_finite_matrix(j, "reg_pinv_apply Jacobian")?;
    check_finite_vector(resid, "reg_pinv_apply residual")?;
    if j.nrows() == 0 {
        return Ok(DVector::zeros(j.ncols()));
    }

    let mut s = outer_gram(j);
    for i in 0..s.nrows() {
        s[(i, i)] += gamma_t;
    }
    let w = solve_spd(&s, resid, gamma_t > 0.0)?;
    Ok(j.tr_mul(&w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    fn close(a: &DVector<f64>, b: &DVector<f64>, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn tikhonov_identity_scalar() {
        let x = tikhonov_solve(&dmatrix![1.0], &dvector![5.0], 0.0).unwrap();
        assert!(close(&x, &dvector![5.0], 1e-14));
    }

    #[test]
    fn tikhonov_scalar_regularized() {
        // (4 + 1) x = 8
        let x = tikhonov_solve(&dmatrix![2.0], &dvector![4.0], 1.0).unwrap();
        assert!(close(&x, &dvector![1.6], 1e-14));
    }

    #[test]
    fn tikhonov_identity_matrix() {
        let x = tikhonov_solve(&DMatrix::identity(2, 2), &dvector![1.0, 1.0], 1.0).unwrap();
        assert!(close(&x, &dvector![0.5, 0.5], 1e-14));
    }

    #[test]
    fn tikhonov_singular_without_regularization() {
        let a = dmatrix![1.0, 1.0; 2.0, 2.0];
        let err = tikhonov_solve(&a, &dvector![1.0, 2.0], 0.0).unwrap_err();
        assert!(matches!(err, Error::SingularSystem));
        // the same system is fine once regularized
        assert!(tikhonov_solve(&a, &dvector![1.0, 2.0], 1e-3).is_ok());
    }

    #[test]
    fn tikhonov_rejects_nan() {
        let err = tikhonov_solve(&dmatrix![f64::NAN], &dvector![1.0], 1.0).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
        let err = tikhonov_solve(&dmatrix![1.0], &dvector![f64::INFINITY], 1.0).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
    }

    #[test]
    fn tikhonov_normal_residual_is_small() {
        let a = DMatrix::from_fn(12, 7, |i, j| ((i * i * 7 + 3 * j * j + i * j) as f64 * 0.37).sin());
        let b = DVector::from_fn(12, |i, _| (i as f64 * 0.91).cos());
        for gamma in [0.0, 1e-3, 1.0] {
            let x = tikhonov_solve(&a, &b, gamma).unwrap();
            let atb = a.tr_mul(&b);
            let normal = a.tr_mul(&a) + DMatrix::identity(7, 7) * gamma;
            let res = (&normal * &x - &atb).norm();
            assert!(res <= 1e-10 * (atb.norm() + 1.0), "gamma={gamma} residual={res}");
        }
    }

    #[test]
    fn pinv_minimum_norm() {
        let x = reg_pinv_apply(&dmatrix![1.0, 0.0], &dvector![2.0], 0.0).unwrap();
        assert!(close(&x, &dvector![2.0, 0.0], 1e-14));
    }

    #[test]
    fn pinv_regularized_halves_step() {
        let x = reg_pinv_apply(&dmatrix![1.0, 0.0], &dvector![2.0], 1.0).unwrap();
        assert!(close(&x, &dvector![1.0, 0.0], 1e-14));
    }

    #[test]
    fn pinv_zero_row_gives_zero_step() {
        let x = reg_pinv_apply(&dmatrix![0.0, 0.0], &dvector![1.0], 1.0).unwrap();
        assert!(close(&x, &dvector![0.0, 0.0], 0.0));
    }

    #[test]
    fn pinv_singular_without_regularization() {
        let err = reg_pinv_apply(&dmatrix![0.0, 0.0], &dvector![1.0], 0.0).unwrap_err();
        assert!(matches!(err, Error::SingularSystem));
    }

    #[test]
    fn pinv_empty_jacobian() {
        let j = DMatrix::<f64>::zeros(0, 3);
        let x = reg_pinv_apply(&j, &DVector::zeros(0), 0.0).unwrap();
        assert_eq!(x, DVector::zeros(3));
    }

    #[test]
    fn gram_is_exactly_symmetric() {
        let a = DMatrix::from_fn(9, 5, |i, j| (i as f64 + 1.3 * j as f64).sin());
        let g = gram(&a);
        assert_eq!(g, g.transpose());
        assert!((g - a.tr_mul(&a)).amax() < 1e-13);
    }
}
