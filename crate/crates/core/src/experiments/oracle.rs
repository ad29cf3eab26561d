//! Interventional queries on a mutilated generator.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::experiments::generators::{Generator, Intervention};
use crate::experiments::rng::stream;

/// Smallest Monte-Carlo size accepted by [`true_effect`].
pub const MIN_MC_SAMPLES: usize = 10_000;

/// Answers `do(treatment = x)` queries by sampling the generator with the
/// treatment's assignment replaced by the constant `x`.
#[derive(Debug, Clone)]
pub struct InterventionOracle {
    generator: Arc<Generator>,
    treatment: String,
    samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

impl InterventionOracle {
    /// `samples` interventional draws are averaged per query.
    pub fn new(generator: Arc<Generator>, treatment: &str, samples: usize) -> Result<Self> {
        if !generator.d1_columns().contains(&treatment) {
            return Err(Error::MissingColumn(treatment.to_string()));
        }
        if treatment == generator.mediator() {
            return Err(Error::invalid("cannot intervene on the mediator"));
        }
        if samples == 0 {
            return Err(Error::invalid("oracle needs at least one sample per query"));
        }
        Ok(InterventionOracle {
            generator,
            treatment: treatment.to_string(),
            samples,
        })
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    pub fn treatment(&self) -> &str {
        &self.treatment
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    /// Mediator value of one unit under `do(treatment = x)`.
    pub fn sample_mediator(&self, x: f64, rng: &mut ChaCha8Rng) -> Result<f64> {
        let exo = self.generator.sample_exogenous(rng);
        let iv = Intervention {
            variable: &self.treatment,
            value: x,
        };
        let values = self.generator.propagate(&exo, Some(iv))?;
        Ok(values[self.generator.mediator_index()])
    }

    /// One noisy outcome `T` under the intervention.
    pub fn sample_outcome(&self, x: f64, rng: &mut ChaCha8Rng) -> Result<f64> {
        let y = self.sample_mediator(x, rng)?;
        let e: f64 = rng.sample(StandardNormal);
        Ok(self.generator.outcome(y) + self.generator.outcome_noise() * e)
    }

    /// Mean of `samples` interventional outcomes, as returned to an optimiser.
    pub fn query(&self, x: f64, rng: &mut ChaCha8Rng) -> Result<f64> {
        let mut acc = 0.0;
        for _ in 0..self.samples {
            acc += self.sample_outcome(x, rng)?;
        }
        let v = acc / self.samples as f64;
        if !v.is_finite() {
            return Err(Error::Oracle(format!("non-finite outcome at x = {x}")));
        }
        Ok(v)
    }
}

/// Monte-Carlo estimate of `E[T | do(X) = x]`.
///
/// Averages `E[T | Y]` over interventional mediator draws; the outcome noise
/// is independent of everything upstream, so this is unbiased for the mean
/// of `T` and has lower variance. The stream depends on `seed` only, so
/// curves over `x` use common random numbers.
pub fn true_effect(oracle: &InterventionOracle, x: f64, mc_samples: usize, seed: u64) -> Result<EffectEstimate> {
    if mc_samples < MIN_MC_SAMPLES {
        return Err(Error::invalid(format!(
            "true_effect needs at least {MIN_MC_SAMPLES} samples, got {mc_samples}"
        )));
    }
    let mut rng = stream(seed, "truth");
    let g = oracle.generator();
    // Welford accumulation.
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for i in 0..mc_samples {
        let v = g.outcome(oracle.sample_mediator(x, &mut rng)?);
        let delta = v - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (v - mean);
    }
    let var = m2 / (mc_samples - 1) as f64;
    Ok(EffectEstimate {
        mean,
        std_error: (var / mc_samples as f64).sqrt(),
        samples: mc_samples,
    })
}

/// [`true_effect`] over a list of treatment values.
pub fn true_effect_curve(oracle: &InterventionOracle, xs: &[f64], mc_samples: usize, seed: u64) -> Result<Vec<EffectEstimate>> {
    xs.iter().map(|&x| true_effect(oracle, x, mc_samples, seed)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::generators::{GeneratorKind, GeneratorSpec};

    fn ablation(noise: f64) -> InterventionOracle {
        let g = Generator::new(GeneratorSpec::new(GeneratorKind::Ablation).with_noise(noise)).unwrap();
        InterventionOracle::new(Arc::new(g), "x", 1).unwrap()
    }

    #[test]
    fn noise_free_effect() {
        let e = true_effect(&ablation(0.0), 1.0, MIN_MC_SAMPLES, 0).unwrap();
        assert!((e.mean + 0.270151).abs() < 1e-6);
        assert!(e.std_error < 1e-12);
    }

    #[test]
    fn standard_error_scales() {
        let o = ablation(0.5);
        let a = true_effect(&o, 0.3, 20_000, 1).unwrap();
        let b = true_effect(&o, 0.3, 40_000, 1).unwrap();
        let ratio = a.std_error.powi(2) / b.std_error.powi(2);
        assert!((ratio - 2.0).abs() < 0.4, "ratio {ratio}");
    }

    #[test]
    fn odd_symmetry() {
        let o = ablation(0.3);
        let a = true_effect(&o, 0.7, 20_000, 2).unwrap();
        let b = true_effect(&o, -0.7, 20_000, 3).unwrap();
        let se = (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
        assert!((a.mean + b.mean).abs() < 3.0 * se);
    }

    #[test]
    fn rejects_small_mc_and_bad_treatment() {
        assert!(true_effect(&ablation(0.1), 0.0, 100, 0).is_err());
        let g = Arc::new(Generator::new(GeneratorSpec::new(GeneratorKind::Ablation)).unwrap());
        assert!(InterventionOracle::new(g.clone(), "y", 1).is_err());
        assert!(InterventionOracle::new(g, "w", 1).is_err());
    }

    #[test]
    fn queries_are_reproducible() {
        let o = ablation(0.1);
        let a = o.query(0.5, &mut stream(9, "q")).unwrap();
        let b = o.query(0.5, &mut stream(9, "q")).unwrap();
        assert_eq!(a, b);
    }
}
