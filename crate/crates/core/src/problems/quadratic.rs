use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};

use super::{check_len, Problem, ProblemError};
use crate::tensor::DenseVector;

/// `f(x) = ½ c ‖x‖²`, minimised at the origin with optimal value 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    dim: usize,
    curvature: f64,
    /// Starting points are drawn uniformly from `[-init_radius, init_radius]^D`.
    init_radius: f64,
}

impl Quadratic {
    pub fn new(dim: usize) -> Self {
        Self::with_curvature(dim, 1.0)
    }

    pub fn with_curvature(dim: usize, curvature: f64) -> Self {
        assert!(dim >= 1 && curvature > 0.0);
        Self {
            dim,
            curvature,
            init_radius: 0.5,
        }
    }

    pub fn with_init_radius(mut self, radius: f64) -> Self {
        assert!(radius > 0.0);
        self.init_radius = radius;
        self
    }

    pub fn curvature(&self) -> f64 {
        self.curvature
    }
}

impl Problem for Quadratic {
    fn name(&self) -> &str {
        "quadratic"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn value_and_grad(
        &self,
        x: &DenseVector,
        _sample: u64,
    ) -> Result<(f64, DenseVector), ProblemError> {
        check_len(x, self.dim)?;
        let value = 0.5 * self.curvature * x.iter().map(|v| v * v).sum::<f64>();
        Ok((value, x.scale(self.curvature)))
    }

    fn loss(&self, x: &DenseVector) -> Result<f64, ProblemError> {
        Ok(self.value_and_grad(x, 0)?.0)
    }

    fn initial_point(&self, seed: u64) -> DenseVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = Uniform::new_inclusive(-self.init_radius, self.init_radius).expect("radius > 0");
        DenseVector::new((0..self.dim).map(|_| dist.sample(&mut rng)).collect()).expect("dim >= 1")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::fd;

    #[test]
    fn value_and_gradient() {
        let q = Quadratic::with_curvature(3, 2.0);
        let x = DenseVector::new(vec![1.0, -2.0, 0.5]).unwrap();
        let (f, g) = q.value_and_grad(&x, 0).unwrap();
        assert_eq!(f, 5.25);
        assert_eq!(g.as_slice(), &[2.0, -4.0, 1.0]);
        assert!(fd::check(&q, &x, 0) < 1e-8);
    }

    #[test]
    fn initial_point_in_radius_and_seeded() {
        let q = Quadratic::new(16).with_init_radius(0.9);
        let a = q.initial_point(4);
        assert_eq!(a, q.initial_point(4));
        assert_ne!(a, q.initial_point(5));
        assert!(a.norm_inf() <= 0.9);
    }

    #[test]
    fn rejects_wrong_dimension() {
        let q = Quadratic::new(2);
        let x = DenseVector::new(vec![1.0]).unwrap();
        assert!(matches!(
            q.loss(&x),
            Err(ProblemError::Dimension {
                expected: 2,
                got: 1
            })
        ));
    }
}
