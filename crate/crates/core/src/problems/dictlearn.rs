use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{check_len, gaussian_matrix, normalized, pack, sign0, unpack, Problem, ProblemError};
use crate::tensor::{DenseMatrix, DenseVector};

/// Dictionary learning: `min ‖I − XY‖_F + λ‖Y‖₁` over a `p×r` dictionary
/// `X` and an `r×q` code matrix `Y`.
///
/// The residual term is the unsquared Frobenius norm, so its gradient is the
/// normalised residual; at zero residual that gradient is taken to be zero.
/// The L1 term uses the subgradient `sign(Y)` with `sign(0) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct DictLearnProblem {
    input: DenseMatrix,
    lambda: f64,
    rank: usize,
}

/// Value and gradients of the dictionary-learning objective.
#[derive(Debug, Clone, PartialEq)]
pub struct DictLearnEval {
    pub value: f64,
    pub grad_x: DenseMatrix,
    pub grad_y: DenseMatrix,
}

impl DictLearnProblem {
    pub const DEFAULT_LAMBDA: f64 = 0.1;

    pub fn new(input: DenseMatrix, lambda: f64, rank: usize) -> Result<Self, ProblemError> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(ProblemError::InvalidParam(format!(
                "lambda = {lambda} must be >= 0"
            )));
        }
        if rank == 0 {
            return Err(ProblemError::InvalidParam(
                "dictionary rank must be >= 1".into(),
            ));
        }
        if input.is_empty() {
            return Err(ProblemError::InvalidParam("input matrix is empty".into()));
        }
        input.check_finite()?;
        Ok(Self {
            input,
            lambda,
            rank,
        })
    }

    pub fn input(&self) -> &DenseMatrix {
        &self.input
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn x_shape(&self) -> (usize, usize) {
        (self.input.rows(), self.rank)
    }

    pub fn y_shape(&self) -> (usize, usize) {
        (self.rank, self.input.cols())
    }

    pub fn split(&self, params: &DenseVector) -> Result<(DenseMatrix, DenseMatrix), ProblemError> {
        check_len(params, self.dim())?;
        let mut mats = unpack(params.as_slice(), &[self.x_shape(), self.y_shape()]);
        let y = mats.pop().expect("two blocks");
        let x = mats.pop().expect("two blocks");
        Ok((x, y))
    }

    pub fn join(&self, x: &DenseMatrix, y: &DenseMatrix) -> DenseVector {
        pack(&[x, y])
    }

    pub fn evaluate(
        &self,
        x: &DenseMatrix,
        y: &DenseMatrix,
    ) -> Result<DictLearnEval, ProblemError> {
        let residual = self.input.sub(&x.matmul(y)?)?;
        let norm = residual.frobenius_norm();
        let unit = normalized(&residual, norm);
        let grad_x = unit.matmul(&y.transpose())?.scale(-1.0);
        let grad_y = x
            .transpose()
            .matmul(&unit)?
            .scale(-1.0)
            .zip_map(y, |g, yv| g + self.lambda * sign0(yv))?;
        Ok(DictLearnEval {
            value: norm + self.lambda * y.l1_norm(),
            grad_x,
            grad_y,
        })
    }

    /// `‖I − XY‖ / ‖I‖`.
    pub fn reconstruction_loss(
        &self,
        x: &DenseMatrix,
        y: &DenseMatrix,
    ) -> Result<f64, ProblemError> {
        let denom = self.input.frobenius_norm();
        if denom == 0.0 {
            return Err(ProblemError::ZeroInput);
        }
        Ok(self.input.sub(&x.matmul(y)?)?.frobenius_norm() / denom)
    }
}

impl Problem for DictLearnProblem {
    fn name(&self) -> &str {
        "dictlearn"
    }

    fn dim(&self) -> usize {
        let (p, r) = self.x_shape();
        let (_, q) = self.y_shape();
        p * r + r * q
    }

    fn value_and_grad(
        &self,
        params: &DenseVector,
        _sample: u64,
    ) -> Result<(f64, DenseVector), ProblemError> {
        let (x, y) = self.split(params)?;
        let eval = self.evaluate(&x, &y)?;
        Ok((eval.value, pack(&[&eval.grad_x, &eval.grad_y])))
    }

    fn loss(&self, params: &DenseVector) -> Result<f64, ProblemError> {
        let (x, y) = self.split(params)?;
        self.reconstruction_loss(&x, &y)
    }

    /// Gaussian factors scaled so that `XY` has roughly the entry scale of
    /// the input.
    fn initial_point(&self, seed: u64) -> DenseVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rms = self.input.frobenius_norm() / (self.input.len() as f64).sqrt();
        let std = (rms.max(1e-12) / self.rank as f64).sqrt().max(1e-3);
        let (p, r) = self.x_shape();
        let (_, q) = self.y_shape();
        let x = gaussian_matrix(p, r, std, &mut rng);
        let y = gaussian_matrix(r, q, std, &mut rng);
        pack(&[&x, &y])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::fd;

    fn m(rows: &[Vec<f64>]) -> DenseMatrix {
        DenseMatrix::from_rows(rows).unwrap()
    }

    fn sample_problem(lambda: f64) -> DictLearnProblem {
        let i = m(&[
            vec![1.0, 2.0, 0.5],
            vec![-1.0, 0.3, 2.0],
            vec![0.7, -0.2, 1.1],
            vec![0.0, 1.0, -1.0],
        ]);
        DictLearnProblem::new(i, lambda, 2).unwrap()
    }

    #[test]
    fn perfect_factorization_has_zero_value_and_gradient() {
        let x = m(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]);
        let y = m(&[vec![2.0, -1.0], vec![0.5, 3.0]]);
        let p = DictLearnProblem::new(x.matmul(&y).unwrap(), 0.0, 2).unwrap();
        let eval = p.evaluate(&x, &y).unwrap();
        assert_eq!(eval.value, 0.0);
        assert_eq!(eval.grad_x.frobenius_norm(), 0.0);
        assert_eq!(p.reconstruction_loss(&x, &y).unwrap(), 0.0);
    }

    #[test]
    fn zero_codes() {
        let p = sample_problem(1.0);
        let x = DenseMatrix::zeros(4, 2).map(|_| 0.3);
        let y = DenseMatrix::zeros(2, 3);
        let eval = p.evaluate(&x, &y).unwrap();
        assert_eq!(eval.value, p.input().frobenius_norm());
        assert_eq!(p.reconstruction_loss(&x, &y).unwrap(), 1.0);
    }

    #[test]
    fn reconstruction_loss_matches_definition() {
        let p = sample_problem(0.1);
        let params = p.initial_point(3);
        let (x, y) = p.split(&params).unwrap();
        let xy = x.matmul(&y).unwrap();
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..4 {
            for j in 0..3 {
                let r = p.input()[(i, j)] - xy[(i, j)];
                num += r * r;
                den += p.input()[(i, j)] * p.input()[(i, j)];
            }
        }
        let direct = num.sqrt() / den.sqrt();
        assert!((p.reconstruction_loss(&x, &y).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for lambda in [0.0, 0.1] {
            let p = sample_problem(lambda);
            for seed in 0..20 {
                let x = p.initial_point(seed);
                assert!(fd::check(&p, &x, 0) < 1e-5, "lambda {lambda} seed {seed}");
            }
        }
    }

    #[test]
    fn scale_invariance() {
        let p = sample_problem(0.0);
        let params = p.initial_point(1);
        let (x, y) = p.split(&params).unwrap();
        let c = 3.5;
        let scaled = DictLearnProblem::new(p.input().scale(c), 0.0, 2).unwrap();
        let a = p.reconstruction_loss(&x, &y).unwrap();
        let b = scaled.reconstruction_loss(&x, &y.scale(c)).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn zero_input_is_an_error_for_the_loss() {
        let p = DictLearnProblem::new(DenseMatrix::zeros(2, 2), 0.1, 1).unwrap();
        let x = DenseMatrix::zeros(2, 1);
        let y = DenseMatrix::zeros(1, 2);
        assert_eq!(p.reconstruction_loss(&x, &y), Err(ProblemError::ZeroInput));
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let p = sample_problem(0.1);
        let x = DenseMatrix::zeros(4, 3);
        let y = DenseMatrix::zeros(2, 3);
        assert!(matches!(p.evaluate(&x, &y), Err(ProblemError::Tensor(_))));
    }
}
