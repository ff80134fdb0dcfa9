//! ADMM baseline for the dictionary-learning code update.
//!
//! At a fixed dictionary `X` the codes solve the lasso
//! `min_Y ½‖I − XY‖² + λ‖Y‖₁`. The split `Y = W` gives
//!
//! ```text
//! Y ← (XᵀX + ρI)⁻¹ (XᵀI + ρ(W − U))
//! W ← soft(Y + U, λ/ρ)
//! U ← U + Y − W
//! ```
//!
//! `ρ > 0` keeps the linear system positive definite even when `XᵀX` is
//! singular.

use nalgebra::{Cholesky, DMatrix};

use super::{DictLearnProblem, ProblemError};
use crate::tensor::DenseMatrix;

pub const DEFAULT_RHO: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct AdmmResult {
    /// The sparse copy `W` after the last iteration.
    pub codes: DenseMatrix,
    /// `‖Y − W‖_F` per iteration.
    pub primal_residuals: Vec<f64>,
    /// `ρ‖W − W_prev‖_F` per iteration.
    pub dual_residuals: Vec<f64>,
}

fn to_na(m: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

fn from_na(m: &DMatrix<f64>) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out[(i, j)] = m[(i, j)];
        }
    }
    out
}

fn soft_threshold(v: f64, k: f64) -> f64 {
    if v > k {
        v - k
    } else if v < -k {
        v + k
    } else {
        0.0
    }
}

pub fn admm_lasso(
    dictionary: &DenseMatrix,
    target: &DenseMatrix,
    lambda: f64,
    rho: f64,
    iters: usize,
) -> Result<AdmmResult, ProblemError> {
    if iters == 0 {
        return Err(ProblemError::InvalidParam(
            "ADMM needs at least one iteration".into(),
        ));
    }
    if rho.is_nan() || rho <= 0.0 || lambda.is_nan() || lambda < 0.0 {
        return Err(ProblemError::InvalidParam(format!(
            "need rho > 0 and lambda >= 0, got {rho}, {lambda}"
        )));
    }
    if dictionary.rows() != target.rows() {
        return Err(crate::tensor::TensorError::ShapeMismatch {
            op: "admm",
            left: dictionary.shape(),
            right: target.shape(),
        }
        .into());
    }
    let x = to_na(dictionary);
    let i = to_na(target);
    let r = dictionary.cols();
    let q = target.cols();
    let gram = x.transpose() * &x + DMatrix::identity(r, r) * rho;
    let chol = Cholesky::new(gram)
        .ok_or_else(|| ProblemError::InvalidParam("ADMM system is not positive definite".into()))?;
    let xt_i = x.transpose() * &i;

    let mut w = DMatrix::<f64>::zeros(r, q);
    let mut u = DMatrix::<f64>::zeros(r, q);
    let mut primal = Vec::with_capacity(iters);
    let mut dual = Vec::with_capacity(iters);
    let k = lambda / rho;
    for _ in 0..iters {
        let rhs = &xt_i + (&w - &u) * rho;
        let y = chol.solve(&rhs);
        let w_prev = w.clone();
        w = (&y + &u).map(|v| soft_threshold(v, k));
        u += &y - &w;
        primal.push((&y - &w).norm());
        dual.push(rho * (&w - &w_prev).norm());
    }
    let codes = from_na(&w);
    codes.check_finite()?;
    Ok(AdmmResult {
        codes,
        primal_residuals: primal,
        dual_residuals: dual,
    })
}

/// Codes for a fixed dictionary via ADMM with the default `ρ`.
pub fn admm_dictlearn_solve(
    problem: &DictLearnProblem,
    dictionary: &DenseMatrix,
    iters: usize,
) -> Result<DenseMatrix, ProblemError> {
    Ok(admm_lasso(
        dictionary,
        problem.input(),
        problem.lambda(),
        DEFAULT_RHO,
        iters,
    )?
    .codes)
}

/// Ridge-damped least-squares dictionary for fixed codes:
/// `X = I Yᵀ (YYᵀ + δI)⁻¹`.
pub fn least_squares_factor(
    target: &DenseMatrix,
    codes: &DenseMatrix,
    ridge: f64,
) -> Result<DenseMatrix, ProblemError> {
    if target.cols() != codes.cols() {
        return Err(crate::tensor::TensorError::ShapeMismatch {
            op: "least_squares_factor",
            left: target.shape(),
            right: codes.shape(),
        }
        .into());
    }
    let y = to_na(codes);
    let i = to_na(target);
    let r = codes.rows();
    let gram = &y * y.transpose() + DMatrix::identity(r, r) * ridge;
    let chol = Cholesky::new(gram)
        .ok_or_else(|| ProblemError::InvalidParam("least-squares system is singular".into()))?;
    let xt = chol.solve(&(&y * i.transpose()));
    let out = from_na(&xt.transpose());
    out.check_finite()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::gaussian_matrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn lasso_objective(x: &DenseMatrix, i: &DenseMatrix, y: &DenseMatrix, lambda: f64) -> f64 {
        let r = i.sub(&x.matmul(y).unwrap()).unwrap().frobenius_norm();
        0.5 * r * r + lambda * y.l1_norm()
    }

    /// Proximal gradient (ISTA) with step 1/L, run to convergence.
    fn ista(x: &DenseMatrix, i: &DenseMatrix, lambda: f64, iters: usize) -> DenseMatrix {
        let xn = to_na(x);
        let lipschitz = (xn.transpose() * &xn).symmetric_eigenvalues().max();
        let step = 1.0 / lipschitz;
        let mut y = DenseMatrix::zeros(x.cols(), i.cols());
        for _ in 0..iters {
            let resid = x.matmul(&y).unwrap().sub(i).unwrap();
            let grad = x.transpose().matmul(&resid).unwrap();
            y = y
                .zip_map(&grad, |yv, g| yv - step * g)
                .unwrap()
                .map(|v| soft_threshold(v, step * lambda));
        }
        y
    }

    #[test]
    fn unpenalized_square_system_is_solved_exactly() {
        let x = DenseMatrix::from_rows(&[
            vec![2.0, 0.5, 0.0],
            vec![0.3, 1.5, -0.4],
            vec![0.0, 0.2, 1.8],
        ])
        .unwrap();
        let truth =
            DenseMatrix::from_rows(&[vec![1.0, -2.0], vec![0.5, 0.25], vec![3.0, -1.0]]).unwrap();
        let i = x.matmul(&truth).unwrap();
        let res = admm_lasso(&x, &i, 0.0, 1.0, 300).unwrap();
        assert!(res.codes.sub(&truth).unwrap().frobenius_norm() < 1e-8);
        assert!(*res.primal_residuals.last().unwrap() < 1e-8);
    }

    #[test]
    fn large_penalty_zeroes_codes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = gaussian_matrix(6, 3, 1.0, &mut rng);
        let i = gaussian_matrix(6, 4, 1.0, &mut rng);
        let res = admm_lasso(&x, &i, 1e6, 1.0, 50).unwrap();
        assert_eq!(res.codes.l1_norm(), 0.0);
    }

    #[test]
    fn agrees_with_ista() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = gaussian_matrix(8, 3, 1.0, &mut rng);
        let i = gaussian_matrix(8, 5, 1.0, &mut rng);
        let lambda = 0.5;
        let admm = admm_lasso(&x, &i, lambda, 1.0, 2000).unwrap().codes;
        let reference = ista(&x, &i, lambda, 20000);
        let a = lasso_objective(&x, &i, &admm, lambda);
        let b = lasso_objective(&x, &i, &reference, lambda);
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }

    #[test]
    fn singular_dictionary_is_damped() {
        let x = DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let i = DenseMatrix::from_rows(&[vec![2.0], vec![2.0]]).unwrap();
        let res = admm_lasso(&x, &i, 0.0, 1.0, 500).unwrap();
        let fit = x.matmul(&res.codes).unwrap();
        assert!(fit.sub(&i).unwrap().frobenius_norm() < 1e-6);
    }

    #[test]
    fn least_squares_recovers_dictionary() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = gaussian_matrix(7, 3, 1.0, &mut rng);
        let y = gaussian_matrix(3, 10, 1.0, &mut rng);
        let i = x.matmul(&y).unwrap();
        let est = least_squares_factor(&i, &y, 1e-12).unwrap();
        assert!(est.sub(&x).unwrap().frobenius_norm() < 1e-8);
    }

    #[test]
    fn zero_iterations_rejected() {
        let x = DenseMatrix::identity(2);
        assert!(admm_lasso(&x, &x, 0.1, 1.0, 0).is_err());
    }
}
