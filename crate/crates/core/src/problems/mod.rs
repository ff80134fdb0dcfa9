//! Benchmark objectives with closed-form (sub)gradients.
//!
//! Every problem flattens its decision variables into one [`DenseVector`] so
//! that any step-based optimizer can drive it. Matrix-valued variables are
//! packed in declaration order, each row-major.

pub mod admm;
pub mod data;
pub mod dictlearn;
pub mod dnmf;
pub mod logreg;
pub mod noise;
pub mod quadratic;

use thiserror::Error;

use crate::tensor::{DenseMatrix, DenseVector, TensorError};

pub use admm::{admm_dictlearn_solve, admm_lasso, least_squares_factor, AdmmResult};
pub use data::{
    load_csv, load_logreg_csv, parse_logreg_csv, parse_matrix_csv, synth_logreg, synth_lowrank,
    write_matrix_csv,
};
pub use dictlearn::DictLearnProblem;
pub use dnmf::DnmfProblem;
pub use logreg::LogRegProblem;
pub use noise::{inject_noise, inject_noise_scaled, median};
pub use quadratic::Quadratic;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProblemError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("parameter vector has {got} entries, problem expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("input matrix has zero norm")]
    ZeroInput,
    #[error("invalid problem parameter: {0}")]
    InvalidParam(String),
    #[error("line {line}: {msg}")]
    Csv { line: u64, msg: String },
    #[error("{0}")]
    Io(String),
}

/// An objective over a flat parameter vector.
///
/// `sample` selects the stochastic realisation of the objective; the
/// optimizer passes its iteration index. Deterministic problems ignore it.
pub trait Problem {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    fn value_and_grad(
        &self,
        x: &DenseVector,
        sample: u64,
    ) -> Result<(f64, DenseVector), ProblemError>;

    /// Tracked metric: reconstruction loss for factorization problems, the
    /// objective value otherwise. Never depends on the sample.
    fn loss(&self, x: &DenseVector) -> Result<f64, ProblemError>;

    /// Known lower bound of [`Problem::loss`], used as the floor when
    /// estimating convergence rates.
    fn loss_floor(&self) -> f64 {
        0.0
    }

    /// Seeded starting point.
    fn initial_point(&self, seed: u64) -> DenseVector;
}

pub(crate) fn check_len(x: &DenseVector, expected: usize) -> Result<(), ProblemError> {
    if x.dim() != expected {
        return Err(ProblemError::Dimension {
            expected,
            got: x.dim(),
        });
    }
    Ok(())
}

/// Splits `x` into matrices of the given shapes, in order.
pub(crate) fn unpack(x: &[f64], shapes: &[(usize, usize)]) -> Vec<DenseMatrix> {
    let mut offset = 0;
    shapes
        .iter()
        .map(|&(r, c)| {
            let m = DenseMatrix::new(r, c, x[offset..offset + r * c].to_vec())
                .expect("slice sized by shape");
            offset += r * c;
            m
        })
        .collect()
}

pub(crate) fn pack(mats: &[&DenseMatrix]) -> DenseVector {
    let data: Vec<f64> = mats
        .iter()
        .flat_map(|m| m.as_slice().iter().copied())
        .collect();
    DenseVector::new(data).expect("problems have at least one parameter")
}

/// `sign(v)` with `sign(0) = 0`, the subgradient choice for `|v|`.
pub(crate) fn sign0(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `R / ‖R‖`, or zero when the residual vanishes.
pub(crate) fn normalized(residual: &DenseMatrix, norm: f64) -> DenseMatrix {
    if norm == 0.0 {
        DenseMatrix::zeros(residual.rows(), residual.cols())
    } else {
        residual.scale(1.0 / norm)
    }
}

pub(crate) fn gaussian_matrix(
    rows: usize,
    cols: usize,
    std: f64,
    rng: &mut impl rand::Rng,
) -> DenseMatrix {
    use rand_distr::{Distribution, StandardNormal};
    let data = (0..rows * cols)
        .map(|_| std * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
        .collect();
    DenseMatrix::new(rows, cols, data).expect("sized by shape")
}

#[cfg(test)]
pub(crate) mod fd {
    //! Central finite differences, used as the gradient oracle in tests.
    use super::Problem;
    use crate::tensor::DenseVector;

    pub fn central_grad(f: impl Fn(&DenseVector) -> f64, x: &DenseVector, h: f64) -> DenseVector {
        let mut g = DenseVector::zeros(x.dim()).unwrap();
        let mut xp = x.clone();
        for i in 0..x.dim() {
            let orig = xp[i];
            xp[i] = orig + h;
            let fp = f(&xp);
            xp[i] = orig - h;
            let fm = f(&xp);
            xp[i] = orig;
            g[i] = (fp - fm) / (2.0 * h);
        }
        g
    }

    pub fn relative_error(a: &DenseVector, b: &DenseVector) -> f64 {
        let diff = a.sub(b).unwrap().norm_l2();
        diff / a.norm_l2().max(b.norm_l2()).max(1e-12)
    }

    pub fn check(p: &dyn Problem, x: &DenseVector, sample: u64) -> f64 {
        let (_, g) = p.value_and_grad(x, sample).unwrap();
        let num = central_grad(|y| p.value_and_grad(y, sample).unwrap().0, x, 1e-6);
        relative_error(&g, &num)
    }
}
