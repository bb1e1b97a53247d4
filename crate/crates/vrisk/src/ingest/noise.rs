//! Gaussian perturbation of intent probabilities: the ranking algorithms
//! see the noisy distribution while evaluation keeps the true one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Error;
use crate::instance::QueryInstance;

#[derive(Debug, Clone, Copy)]
pub struct NoiseConfig {
    /// Gaussian variance of the additive noise.
    pub sigma2: f64,
    pub seed: u64,
}

/// Adds `N(0, sigma2)` noise to each intent probability, clips to
/// `[0, 1]` and renormalizes; if everything clips to zero, falls back to
/// the uniform distribution. The relevance table is unchanged. With
/// `sigma2 = 0` the instance is returned bit-identical.
pub fn perturb_intents(inst: &QueryInstance, noise: &NoiseConfig) -> Result<QueryInstance, Error> {
    if noise.sigma2 < 0.0 || !noise.sigma2.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "noise variance must be nonnegative, got {}",
            noise.sigma2
        )));
    }
    if noise.sigma2 == 0.0 {
        return Ok(inst.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let normal = Normal::new(0.0, noise.sigma2.sqrt()).expect("finite std dev");
    let eps: Vec<f64> = (0..inst.n_intents()).map(|_| normal.sample(&mut rng)).collect();
    inst.with_intent_probs(perturbed_probs(inst.intents().probs(), &eps))
}

/// The pure perturbation rule, exposed so adversarial noise draws can be
/// injected directly in tests.
pub fn perturbed_probs(probs: &[f64], eps: &[f64]) -> Vec<f64> {
    let clipped: Vec<f64> = probs
        .iter()
        .zip(eps)
        .map(|(p, e)| (p + e).clamp(0.0, 1.0))
        .collect();
    let sum: f64 = clipped.iter().sum();
    if sum <= 0.0 {
        vec![1.0 / probs.len() as f64; probs.len()]
    } else {
        clipped.iter().map(|p| p / sum).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::toy4;

    #[test]
    fn zero_variance_is_identity() {
        let inst = toy4();
        let out = perturb_intents(&inst, &NoiseConfig { sigma2: 0.0, seed: 1 }).unwrap();
        assert_eq!(inst, out);
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let inst = toy4();
        let cfg = NoiseConfig {
            sigma2: 0.5,
            seed: 77,
        };
        let a = perturb_intents(&inst, &cfg).unwrap();
        let b = perturb_intents(&inst, &cfg).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.intents().probs(), inst.intents().probs());
        // Relevance is untouched.
        assert_eq!(a.rel_table(), inst.rel_table());
    }

    #[test]
    fn output_sums_to_one() {
        let inst = toy4();
        for seed in 0..20 {
            let out =
                perturb_intents(&inst, &NoiseConfig { sigma2: 0.3, seed }).unwrap();
            let sum: f64 = out.intents().probs().iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn all_negative_draws_fall_back_to_uniform() {
        let probs = [0.51, 0.49];
        let eps = [-5.0, -5.0];
        assert_eq!(perturbed_probs(&probs, &eps), vec![0.5, 0.5]);
    }

    #[test]
    fn negative_variance_is_rejected() {
        let inst = toy4();
        assert!(perturb_intents(&inst, &NoiseConfig { sigma2: -0.1, seed: 0 }).is_err());
    }
}
