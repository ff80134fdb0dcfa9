use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{check_len, gaussian_matrix, Problem, ProblemError};
use crate::tensor::{DenseMatrix, DenseVector};

/// L2-regularised binary logistic regression, mean cross-entropy loss.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRegProblem {
    features: DenseMatrix,
    labels: Vec<f64>,
    l2_reg: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

impl LogRegProblem {
    pub fn new(features: DenseMatrix, labels: Vec<f64>, l2_reg: f64) -> Result<Self, ProblemError> {
        if features.rows() == 0 || features.cols() == 0 {
            return Err(ProblemError::InvalidParam("feature matrix is empty".into()));
        }
        if labels.len() != features.rows() {
            return Err(ProblemError::InvalidParam(format!(
                "{} labels for {} rows",
                labels.len(),
                features.rows()
            )));
        }
        if let Some(i) = labels.iter().position(|&y| y != 0.0 && y != 1.0) {
            return Err(ProblemError::InvalidParam(format!(
                "label {} at row {i} is not 0 or 1",
                labels[i]
            )));
        }
        if !(l2_reg >= 0.0 && l2_reg.is_finite()) {
            return Err(ProblemError::InvalidParam(format!(
                "l2_reg = {l2_reg} must be >= 0"
            )));
        }
        features.check_finite()?;
        Ok(Self {
            features,
            labels,
            l2_reg,
        })
    }

    pub fn features(&self) -> &DenseMatrix {
        &self.features
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn l2_reg(&self) -> f64 {
        self.l2_reg
    }
}

impl Problem for LogRegProblem {
    fn name(&self) -> &str {
        "logreg"
    }

    fn dim(&self) -> usize {
        self.features.cols()
    }

    fn value_and_grad(
        &self,
        w: &DenseVector,
        _sample: u64,
    ) -> Result<(f64, DenseVector), ProblemError> {
        check_len(w, self.dim())?;
        let n = self.features.rows();
        let mut loss = 0.0;
        let mut grad = vec![0.0; self.dim()];
        for (i, &y) in self.labels.iter().enumerate() {
            let row = self.features.row(i);
            let z: f64 = row.iter().zip(w.iter()).map(|(a, b)| a * b).sum();
            loss += softplus(z) - y * z;
            let residual = sigmoid(z) - y;
            for (g, &a) in grad.iter_mut().zip(row) {
                *g += residual * a;
            }
        }
        let reg = 0.5 * self.l2_reg * w.iter().map(|v| v * v).sum::<f64>();
        let grad = grad
            .iter()
            .zip(w.iter())
            .map(|(g, wi)| g / n as f64 + self.l2_reg * wi)
            .collect();
        Ok((loss / n as f64 + reg, DenseVector::new(grad)?))
    }

    fn loss(&self, w: &DenseVector) -> Result<f64, ProblemError> {
        Ok(self.value_and_grad(w, 0)?.0)
    }

    fn initial_point(&self, seed: u64) -> DenseVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = gaussian_matrix(1, self.dim(), 0.01, &mut rng);
        DenseVector::new(w.into_vec()).expect("d >= 1")
    }
}
