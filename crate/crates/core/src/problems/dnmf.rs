use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::noise::{inject_noise_scaled, NOISE_FRACTION};
use super::{check_len, gaussian_matrix, normalized, pack, sign0, unpack, Problem, ProblemError};
use crate::tensor::{DenseMatrix, DenseVector};

/// Deep nonlinear matrix factorization with a sparse background term:
///
/// ```text
/// min ‖(X₁ X₂ ⋯ X_k) · relu(Y) + Z − I‖_F + μ ‖Z‖₁
/// ```
///
/// This is the exact-penalty form of "minimise ‖Z‖₁ subject to the
/// factorization reproducing `I`". Layer `i` has shape `r_{i−1} × r_i` with
/// `r₀ = p`, `Y` is `r_k × q` and `Z` is `p × q`. Parameters are packed as
/// `X₁, …, X_k, Y, Z`.
///
/// With a positive noise amplitude the objective becomes stochastic: sample
/// `t` adds uniform noise of half-width `amplitude·|median(Y)|` to `Y`,
/// drawn from a generator keyed by `(noise_seed, t)`, before the
/// activation. The noise is treated as a constant when differentiating.
#[derive(Debug, Clone, PartialEq)]
pub struct DnmfProblem {
    input: DenseMatrix,
    layer_dims: Vec<usize>,
    penalty: f64,
    noise_amplitude: f64,
    noise_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DnmfParams {
    pub layers: Vec<DenseMatrix>,
    pub features: DenseMatrix,
    pub background: DenseMatrix,
}

impl DnmfProblem {
    pub const DEFAULT_PENALTY: f64 = 1.0;

    pub fn new(
        input: DenseMatrix,
        layer_dims: Vec<usize>,
        penalty: f64,
    ) -> Result<Self, ProblemError> {
        if layer_dims.is_empty() || layer_dims.contains(&0) {
            return Err(ProblemError::InvalidParam(format!(
                "layer sizes must be a nonempty list of positive counts, got {layer_dims:?}"
            )));
        }
        if !(penalty >= 0.0 && penalty.is_finite()) {
            return Err(ProblemError::InvalidParam(format!(
                "penalty = {penalty} must be >= 0"
            )));
        }
        if input.is_empty() {
            return Err(ProblemError::InvalidParam("input matrix is empty".into()));
        }
        input.check_finite()?;
        Ok(Self {
            input,
            layer_dims,
            penalty,
            noise_amplitude: 0.0,
            noise_seed: 0,
        })
    }

    /// Noisy variant with the standard `0.1·median` half-width.
    pub fn noisy(self, seed: u64) -> Self {
        self.with_noise(NOISE_FRACTION, seed)
    }

    pub fn with_noise(mut self, amplitude: f64, seed: u64) -> Self {
        assert!(amplitude >= 0.0 && amplitude.is_finite());
        self.noise_amplitude = amplitude;
        self.noise_seed = seed;
        self
    }

    pub fn is_noisy(&self) -> bool {
        self.noise_amplitude > 0.0
    }

    pub fn input(&self) -> &DenseMatrix {
        &self.input
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    fn shapes(&self) -> Vec<(usize, usize)> {
        let p = self.input.rows();
        let q = self.input.cols();
        let mut shapes = Vec::with_capacity(self.layer_dims.len() + 2);
        let mut prev = p;
        for &r in &self.layer_dims {
            shapes.push((prev, r));
            prev = r;
        }
        shapes.push((prev, q));
        shapes.push((p, q));
        shapes
    }

    pub fn split(&self, params: &DenseVector) -> Result<DnmfParams, ProblemError> {
        check_len(params, self.dim())?;
        let mut mats = unpack(params.as_slice(), &self.shapes());
        let background = mats.pop().expect("Z block");
        let features = mats.pop().expect("Y block");
        Ok(DnmfParams {
            layers: mats,
            features,
            background,
        })
    }

    pub fn join(&self, params: &DnmfParams) -> DenseVector {
        let mut refs: Vec<&DenseMatrix> = params.layers.iter().collect();
        refs.push(&params.features);
        refs.push(&params.background);
        pack(&refs)
    }

    /// The noise matrix `U` for a given sample; all zeros for the smooth
    /// variant.
    pub fn noise_for(&self, features: &DenseMatrix, sample: u64) -> DenseMatrix {
        if !self.is_noisy() {
            return DenseMatrix::zeros(features.rows(), features.cols());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.noise_seed);
        rng.set_stream(sample);
        inject_noise_scaled(features, self.noise_amplitude, &mut rng)
            .sub(features)
            .expect("same shape")
    }

    fn product(layers: &[DenseMatrix]) -> Result<DenseMatrix, ProblemError> {
        let mut acc = layers[0].clone();
        for layer in &layers[1..] {
            acc = acc.matmul(layer)?;
        }
        Ok(acc)
    }

    /// Value and packed gradient with an explicit noise matrix added to `Y`.
    pub fn value_and_grad_with_noise(
        &self,
        params: &DnmfParams,
        noise: &DenseMatrix,
    ) -> Result<(f64, DenseVector), ProblemError> {
        let k = params.layers.len();
        let product = Self::product(&params.layers)?;
        let pre_activation = params.features.add(noise)?;
        let activated = pre_activation.relu();
        let residual = product
            .matmul(&activated)?
            .add(&params.background)?
            .sub(&self.input)?;
        let norm = residual.frobenius_norm();
        let unit = normalized(&residual, norm);
        let value = norm + self.penalty * params.background.l1_norm();

        let grad_product = unit.matmul(&activated.transpose())?;
        let grad_activated = product.transpose().matmul(&unit)?;
        let grad_features =
            grad_activated.zip_map(&pre_activation, |g, a| if a > 0.0 { g } else { 0.0 })?;
        let grad_background =
            unit.zip_map(&params.background, |g, z| g + self.penalty * sign0(z))?;

        // d/dX_i = (X₁⋯X_{i−1})ᵀ · dP · (X_{i+1}⋯X_k)ᵀ
        let mut suffix: Vec<Option<DenseMatrix>> = vec![None; k];
        for i in (0..k.saturating_sub(1)).rev() {
            let next = &params.layers[i + 1];
            suffix[i] = Some(match &suffix[i + 1] {
                Some(s) => next.matmul(s)?,
                None => next.clone(),
            });
        }
        let mut grads = Vec::with_capacity(k + 2);
        let mut prefix: Option<DenseMatrix> = None;
        for (layer, suffix) in params.layers.iter().zip(&suffix) {
            let mut g = match &prefix {
                Some(pre) => pre.transpose().matmul(&grad_product)?,
                None => grad_product.clone(),
            };
            if let Some(s) = suffix {
                g = g.matmul(&s.transpose())?;
            }
            grads.push(g);
            prefix = Some(match prefix {
                Some(pre) => pre.matmul(layer)?,
                None => layer.clone(),
            });
        }
        grads.push(grad_features);
        grads.push(grad_background);
        let refs: Vec<&DenseMatrix> = grads.iter().collect();
        Ok((value, pack(&refs)))
    }

    /// `‖(∏X_i)·relu(Y) + Z − I‖ / ‖I‖`, without noise.
    pub fn reconstruction_loss(&self, params: &DnmfParams) -> Result<f64, ProblemError> {
        let denom = self.input.frobenius_norm();
        if denom == 0.0 {
            return Err(ProblemError::ZeroInput);
        }
        let product = Self::product(&params.layers)?;
        let fit = product
            .matmul(&params.features.relu())?
            .add(&params.background)?
            .sub(&self.input)?;
        Ok(fit.frobenius_norm() / denom)
    }
}

impl Problem for DnmfProblem {
    fn name(&self) -> &str {
        if self.is_noisy() {
            "noisy-dnmf"
        } else {
            "dnmf"
        }
    }

    fn dim(&self) -> usize {
        self.shapes().iter().map(|(r, c)| r * c).sum()
    }

    fn value_and_grad(
        &self,
        x: &DenseVector,
        sample: u64,
    ) -> Result<(f64, DenseVector), ProblemError> {
        let params = self.split(x)?;
        let noise = self.noise_for(&params.features, sample);
        self.value_and_grad_with_noise(&params, &noise)
    }

    fn loss(&self, x: &DenseVector) -> Result<f64, ProblemError> {
        self.reconstruction_loss(&self.split(x)?)
    }

    /// Layers near a scaled identity-like Gaussian, positive-leaning features
    /// and a zero background term.
    fn initial_point(&self, seed: u64) -> DenseVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rms = self.input.frobenius_norm() / (self.input.len() as f64).sqrt();
        let shapes = self.shapes();
        let k = self.layer_dims.len();
        let mut mats = Vec::with_capacity(shapes.len());
        for &(r, c) in &shapes[..k] {
            mats.push(gaussian_matrix(r, c, 1.0 / (r as f64).sqrt(), &mut rng));
        }
        let (yr, yc) = shapes[k];
        let y = gaussian_matrix(yr, yc, rms.max(1e-3), &mut rng).map(|v| v.abs());
        mats.push(y);
        let (zr, zc) = shapes[k + 1];
        mats.push(DenseMatrix::zeros(zr, zc));
        let refs: Vec<&DenseMatrix> = mats.iter().collect();
        pack(&refs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::fd;
    use crate::problems::DictLearnProblem;

    fn input() -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        gaussian_matrix(6, 5, 1.0, &mut rng)
    }

    /// Random parameters with every ReLU argument and L1 argument bounded
    /// away from the kink.
    fn smooth_point(p: &DnmfProblem, seed: u64) -> DenseVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = gaussian_matrix(1, p.dim(), 1.0, &mut rng);
        let x = x.map(|v| {
            if v.abs() < 1e-2 {
                1e-2_f64.copysign(v) + v
            } else {
                v
            }
        });
        DenseVector::new(x.into_vec()).unwrap()
    }

    #[test]
    fn satisfied_constraint_has_zero_value() {
        let p = DnmfProblem::new(input(), vec![4, 3], 0.0).unwrap();
        let mut params = p.split(&p.initial_point(1)).unwrap();
        let fit = DnmfProblem::product(&params.layers)
            .unwrap()
            .matmul(&params.features.relu())
            .unwrap();
        params.background = p.input().sub(&fit).unwrap();
        let (value, _) = p.value_and_grad(&p.join(&params), 0).unwrap();
        assert!(value.abs() < 1e-12, "{value}");
        assert!(p.reconstruction_loss(&params).unwrap() < 1e-12);
    }

    #[test]
    fn all_zero_parameters_give_unit_loss() {
        let p = DnmfProblem::new(input(), vec![3], 1.0).unwrap();
        let zero = DenseVector::zeros(p.dim()).unwrap();
        assert_eq!(p.loss(&zero).unwrap(), 1.0);
    }

    #[test]
    fn reconstruction_loss_matches_definition() {
        let p = DnmfProblem::new(input(), vec![4, 2], 1.0).unwrap();
        let params = p.split(&smooth_point(&p, 5)).unwrap();
        let x1 = &params.layers[0];
        let x2 = &params.layers[1];
        let (rows, cols) = p.input().shape();
        let mut num = 0.0;
        for i in 0..rows {
            for j in 0..cols {
                let mut fit = 0.0;
                for a in 0..4 {
                    for b in 0..2 {
                        fit += x1[(i, a)] * x2[(a, b)] * params.features[(b, j)].max(0.0);
                    }
                }
                let r = fit + params.background[(i, j)] - p.input()[(i, j)];
                num += r * r;
            }
        }
        let direct = num.sqrt() / p.input().frobenius_norm();
        assert!((p.reconstruction_loss(&params).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        for dims in [vec![3], vec![4, 3], vec![4, 3, 2]] {
            let p = DnmfProblem::new(input(), dims.clone(), 0.5).unwrap();
            for seed in 0..20 {
                let x = smooth_point(&p, seed);
                let err = fd::check(&p, &x, 0);
                assert!(err < 1e-5, "{dims:?} seed {seed}: {err}");
            }
        }
    }

    #[test]
    fn noisy_gradient_with_frozen_noise() {
        let p = DnmfProblem::new(input(), vec![4, 3], 0.5)
            .unwrap()
            .noisy(17);
        for seed in 0..20 {
            let x = smooth_point(&p, seed);
            let params = p.split(&x).unwrap();
            let noise = p.noise_for(&params.features, seed);
            let (_, g) = p.value_and_grad_with_noise(&params, &noise).unwrap();
            let num = fd::central_grad(
                |y| {
                    p.value_and_grad_with_noise(&p.split(y).unwrap(), &noise)
                        .unwrap()
                        .0
                },
                &x,
                1e-6,
            );
            assert!(fd::relative_error(&g, &num) < 1e-5);
        }
    }

    #[test]
    fn noisy_objective_is_reproducible_per_sample() {
        let p = DnmfProblem::new(input(), vec![4, 3], 1.0).unwrap().noisy(3);
        let x = p.initial_point(0);
        let a = p.value_and_grad(&x, 7).unwrap();
        let b = p.value_and_grad(&x, 7).unwrap();
        assert_eq!(a, b);
        let c = p.value_and_grad(&x, 8).unwrap();
        assert_ne!(a.0, c.0);
        let smooth = DnmfProblem::new(input(), vec![4, 3], 1.0).unwrap();
        assert_eq!(
            smooth.value_and_grad(&x, 7).unwrap(),
            smooth.value_and_grad(&x, 8).unwrap()
        );
    }

    #[test]
    fn noise_respects_median_bound() {
        let p = DnmfProblem::new(input(), vec![3], 1.0).unwrap().noisy(1);
        let params = p.split(&p.initial_point(2)).unwrap();
        let bound = 0.1 * crate::problems::median(params.features.as_slice()).abs();
        let u = p.noise_for(&params.features, 4);
        assert!(u.as_slice().iter().all(|v| v.abs() <= bound));
        assert!(u.frobenius_norm() > 0.0);
    }

    #[test]
    fn single_positive_layer_reduces_to_dictionary_residual() {
        let i = input();
        let p = DnmfProblem::new(i.clone(), vec![2], 0.0).unwrap();
        let dl = DictLearnProblem::new(i, 0.0, 2).unwrap();
        let mut params = p.split(&p.initial_point(8)).unwrap();
        params.features = params.features.map(|v| v.abs() + 0.1);
        let (dnmf_value, _) = p.value_and_grad(&p.join(&params), 0).unwrap();
        let dl_eval = dl.evaluate(&params.layers[0], &params.features).unwrap();
        assert!((dnmf_value - dl_eval.value).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_layers() {
        assert!(DnmfProblem::new(input(), vec![], 1.0).is_err());
        assert!(DnmfProblem::new(input(), vec![3, 0], 1.0).is_err());
        assert!(DnmfProblem::new(input(), vec![3], -1.0).is_err());
    }
}
