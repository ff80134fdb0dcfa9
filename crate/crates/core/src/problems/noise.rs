use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::tensor::DenseMatrix;

/// Relative half-width of the injected noise: entries are drawn from
/// `[-0.1·median, 0.1·median]`.
pub const NOISE_FRACTION: f64 = 0.1;

/// Median of all entries; the mean of the two central values for an even
/// count. Returns 0 for an empty slice.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// `Y + U` with `U_ij ~ Uniform[-0.1·|median(Y)|, 0.1·|median(Y)|]`.
pub fn inject_noise<R: Rng + ?Sized>(y: &DenseMatrix, rng: &mut R) -> DenseMatrix {
    inject_noise_scaled(y, NOISE_FRACTION, rng)
}

/// Noise with half-width `fraction·|median(Y)|`. A zero median (or zero
/// fraction) leaves `Y` unchanged and draws nothing.
pub fn inject_noise_scaled<R: Rng + ?Sized>(
    y: &DenseMatrix,
    fraction: f64,
    rng: &mut R,
) -> DenseMatrix {
    let half_width = fraction * median(y.as_slice()).abs();
    if half_width == 0.0 || !half_width.is_finite() {
        return y.clone();
    }
    let dist = Uniform::new_inclusive(-half_width, half_width).expect("finite positive width");
    let data = y.as_slice().iter().map(|&v| v + dist.sample(rng)).collect();
    DenseMatrix::new(y.rows(), y.cols(), data).expect("same shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn median_odd_and_even() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(median(&[]), 0.0);
    }

    #[test]
    fn zero_median_is_noise_free() {
        let y = DenseMatrix::from_rows(&[vec![-1.0, 0.0, 5.0]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(inject_noise(&y, &mut rng), y);
    }

    #[test]
    fn median_ten_bounds_noise_by_one() {
        let y = DenseMatrix::new(1, 1001, vec![10.0; 1001]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let noisy = inject_noise(&y, &mut rng);
        assert_eq!(noisy.shape(), y.shape());
        for (a, b) in noisy.as_slice().iter().zip(y.as_slice()) {
            let u = a - b;
            assert!((-1.0..=1.0).contains(&u), "{u}");
        }
    }

    #[test]
    fn negative_median_uses_magnitude() {
        let y = DenseMatrix::new(1, 5, vec![-10.0; 5]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let noisy = inject_noise(&y, &mut rng);
        assert_ne!(noisy, y);
        assert!(noisy
            .sub(&y)
            .unwrap()
            .as_slice()
            .iter()
            .all(|u| u.abs() <= 1.0));
    }
}
