//! Coordinate randomization: the iterate is replaced by a uniformly random
//! permutation of its own coordinates.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::tensor::DenseVector;

/// Seeded source of permutations of `{0..D}`.
///
/// Two sources built from the same seed produce the same sequence of
/// permutations. A scripted source replays a fixed list instead, which lets
/// tests pick the permutation a step will apply.
#[derive(Debug, Clone)]
pub struct PermutationSource {
    rng: ChaCha8Rng,
    script: Option<Script>,
}

#[derive(Debug, Clone)]
struct Script {
    perms: Vec<Vec<usize>>,
    next: usize,
}

impl PermutationSource {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            script: None,
        }
    }

    /// Replays `perms` in order, cycling. Panics if a scripted permutation
    /// does not match the requested dimension or is not a bijection.
    pub fn scripted(perms: Vec<Vec<usize>>) -> Self {
        assert!(
            !perms.is_empty(),
            "scripted source needs at least one permutation"
        );
        for p in &perms {
            assert!(
                is_permutation(p),
                "scripted entry {p:?} is not a permutation"
            );
        }
        Self {
            rng: ChaCha8Rng::seed_from_u64(0),
            script: Some(Script { perms, next: 0 }),
        }
    }

    /// Draws the next permutation of `0..dim`.
    pub fn permutation(&mut self, dim: usize) -> Vec<usize> {
        if let Some(script) = &mut self.script {
            let p = script.perms[script.next % script.perms.len()].clone();
            script.next += 1;
            assert_eq!(p.len(), dim, "scripted permutation has wrong length");
            return p;
        }
        let mut idx: Vec<usize> = (0..dim).collect();
        idx.shuffle(&mut self.rng);
        idx
    }

    /// The underlying generator, for auxiliary draws that should follow the
    /// same seed.
    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

pub fn is_permutation(p: &[usize]) -> bool {
    let mut seen = vec![false; p.len()];
    for &i in p {
        if i >= p.len() || seen[i] {
            return false;
        }
        seen[i] = true;
    }
    true
}

/// `out[i] = x[perm[i]]` for a freshly drawn permutation.
pub fn coordinate_randomize(x: &DenseVector, src: &mut PermutationSource) -> DenseVector {
    let perm = src.permutation(x.dim());
    apply_permutation(x, &perm)
}

pub fn apply_permutation(x: &DenseVector, perm: &[usize]) -> DenseVector {
    debug_assert_eq!(perm.len(), x.dim());
    let data = perm.iter().map(|&j| x[j]).collect();
    DenseVector::new(data).expect("permutation of a nonempty vector")
}

/// Largest observed `‖R x‖ / ‖x‖` over `trials` random Gaussian vectors.
/// Zero vectors are redrawn so the ratio is always defined.
pub fn operator_norm_estimate(src: &mut PermutationSource, dim: usize, trials: usize) -> f64 {
    assert!(dim >= 1 && trials >= 1);
    let mut sup = 0.0_f64;
    for _ in 0..trials {
        let x = loop {
            let data: Vec<f64> = (0..dim)
                .map(|_| StandardNormal.sample(src.rng_mut()))
                .collect();
            let x = DenseVector::new(data).expect("dim >= 1");
            if x.norm_l2() > 0.0 {
                break x;
            }
        };
        let rx = coordinate_randomize(&x, src);
        sup = sup.max(rx.norm_l2() / x.norm_l2());
    }
    sup
}
