//! Sampling baseline in the style of causal Bayesian optimisation.
//!
//! Stage-1 GPs map treatment (and adjustment) to the mediator; `f` is a GP on
//! D2. At each treatment value, `L` mediator draws `y_l` from the identified
//! interventional law are pushed through `R` joint posterior draws of `f`,
//! and the surrogate reports the mean and standard deviation of those `L·R`
//! values. Covariance across distinct treatments is zero.

use std::collections::BTreeMap;

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::embedding::{AdjustmentKind, AdjustmentSpec};
use crate::error::{Error, Result};
use crate::experiments::rng::stream;
use crate::fusion::{ModelKind, TreatmentEffect};
use crate::gp::{fit_rbf_gp, variance, GpModel, OptimConfig};
use crate::kernel::{RbfKernel, SpdFactor};
use crate::points::{median_heuristic, Dataset, Points};

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingConfig {
    /// Mediator draws per treatment.
    pub l: usize,
    /// Joint draws of `f` per treatment.
    pub r: usize,
    pub target: String,
    pub optim: OptimConfig,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            l: 100,
            r: 100,
            target: "t".to_string(),
            optim: OptimConfig::default(),
        }
    }
}

/// One GP per output column; lengthscale frozen at the median heuristic.
#[derive(Debug, Clone)]
struct StageGp {
    gps: Vec<GpModel<RbfKernel>>,
}

impl StageGp {
    fn fit(inputs: &Points, outputs: &Points, optim: &OptimConfig) -> Result<Self> {
        let gps = (0..outputs.dim())
            .map(|j| {
                let t: Vec<f64> = outputs.rows().map(|r| r[j]).collect();
                let v = variance(&t).max(1e-12);
                let k0 = RbfKernel::isotropic(inputs.dim(), median_heuristic(inputs), v)?;
                Ok(fit_rbf_gp(inputs, &t, &k0, 0.1 * v, &["lengthscale"], optim)?.0)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(StageGp { gps })
    }

    /// One predictive draw (latent posterior plus observation noise) at `input`.
    fn draw(&self, input: &[f64], rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        let q = Points::new(input.len(), input.to_vec())?;
        self.gps
            .iter()
            .map(|gp| {
                let (m, c) = gp.posterior(&q)?;
                let sd = (c[(0, 0)].max(0.0) + gp.noise()).sqrt();
                let e: f64 = rng.sample(StandardNormal);
                Ok(m[0] + sd * e)
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct SamplingBaseline {
    spec: AdjustmentSpec,
    config: SamplingConfig,
    seed: u64,
    /// Backdoor: `(x, z) → y`. Front-door: `(u, x) → y`.
    outcome_stage: StageGp,
    /// Front-door only: `x → u`.
    mediator_stage: Option<StageGp>,
    /// Empirical rows resampled when averaging (adjustment for backdoor, treatment for front-door).
    resample: Option<Points>,
    f: GpModel<RbfKernel>,
    cache: BTreeMap<Vec<u64>, (f64, f64)>,
}

fn join(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().chain(b).copied().collect()
}

fn hstack(a: &Points, b: &Points) -> Result<Points> {
    let rows: Vec<Vec<f64>> = a.rows().zip(b.rows()).map(|(r, s)| join(r, s)).collect();
    Points::from_rows(&rows)
}

fn key(x: &[f64]) -> Vec<u64> {
    x.iter().map(|v| v.to_bits()).collect()
}

impl SamplingBaseline {
    pub fn fit(d1: &Dataset, d2: &Dataset, spec: &AdjustmentSpec, config: &SamplingConfig, seed: u64) -> Result<Self> {
        spec.validate(d1)?;
        if config.l < 2 || config.r < 2 {
            return Err(Error::invalid("sampling baseline needs L, R ≥ 2"));
        }
        if d1.is_empty() {
            return Err(Error::EmptyInput("D1"));
        }
        if d2.is_empty() {
            return Err(Error::EmptyInput("D2"));
        }
        let x = d1.points(&spec.treatment)?;
        let y = d1.points(&spec.mediator)?;
        let (outcome_stage, mediator_stage, resample) = match (spec.kind, spec.adjustment.is_empty()) {
            (_, true) => (StageGp::fit(&x, &y, &config.optim)?, None, None),
            (AdjustmentKind::Backdoor, false) => {
                let z = d1.points(&spec.adjustment)?;
                (StageGp::fit(&hstack(&x, &z)?, &y, &config.optim)?, None, Some(z))
            }
            (AdjustmentKind::Frontdoor, false) => {
                let u = d1.points(&spec.adjustment)?;
                let outcome = StageGp::fit(&hstack(&u, &x)?, &y, &config.optim)?;
                (outcome, Some(StageGp::fit(&x, &u, &config.optim)?), Some(x.clone()))
            }
        };

        let y2 = d2.points(&spec.mediator)?;
        let t = d2.column(&config.target)?;
        let pooled = y.concat(&y2)?;
        let v = variance(t).max(1e-12);
        let k0 = RbfKernel::isotropic(y2.dim(), median_heuristic(&pooled), v)?;
        let (f, _) = fit_rbf_gp(&y2, t, &k0, 0.1 * v, &["lengthscale"], &config.optim)?;

        Ok(SamplingBaseline {
            spec: spec.clone(),
            config: config.clone(),
            seed,
            outcome_stage,
            mediator_stage,
            resample,
            f,
            cache: BTreeMap::new(),
        })
    }

    /// Precomputes moments on `grid` so later lookups there are free.
    pub fn with_grid(mut self, grid: &Points) -> Result<Self> {
        for row in grid.rows() {
            let m = self.compute(row)?;
            self.cache.insert(key(row), m);
        }
        Ok(self)
    }

    pub fn spec(&self) -> &AdjustmentSpec {
        &self.spec
    }

    fn mediator_draws(&self, x: &[f64], rng: &mut ChaCha8Rng) -> Result<Points> {
        let mut rows = Vec::with_capacity(self.config.l);
        for _ in 0..self.config.l {
            let pick = |rng: &mut ChaCha8Rng, p: &Points| p.row(rng.random_range(0..p.len())).to_vec();
            let y = match (&self.mediator_stage, &self.resample) {
                (None, None) => self.outcome_stage.draw(x, rng)?,
                (None, Some(z)) => {
                    let zl = pick(rng, z);
                    self.outcome_stage.draw(&join(x, &zl), rng)?
                }
                (Some(ms), Some(xs)) => {
                    let u = ms.draw(x, rng)?;
                    let xl = pick(rng, xs);
                    self.outcome_stage.draw(&join(&u, &xl), rng)?
                }
                (Some(_), None) => return Err(Error::invalid("front-door sampler without treatment rows")),
            };
            rows.push(y);
        }
        Points::from_rows(&rows)
    }

    fn compute(&self, x: &[f64]) -> Result<(f64, f64)> {
        let tag: String = x.iter().map(|v| format!("{:016x}", v.to_bits())).collect();
        let mut rng = stream(self.seed, &format!("sampling-{tag}"));
        let ys = self.mediator_draws(x, &mut rng)?;
        let (mu, cov) = self.f.posterior(&ys)?;
        let chol = SpdFactor::new(&cov, 0.0, "sampling f posterior")?.l();
        let n = ys.len();
        let mut values = Vec::with_capacity(n * self.config.r);
        for _ in 0..self.config.r {
            let e = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            values.extend((&mu + &chol * e).iter().copied());
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("sampling baseline produced non-finite draws".into()));
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        Ok((mean, variance(&values)))
    }

    fn moments(&self, x: &[f64]) -> Result<(f64, f64)> {
        match self.cache.get(&key(x)) {
            Some(m) => Ok(*m),
            None => self.compute(x),
        }
    }
}

impl TreatmentEffect for SamplingBaseline {
    fn kind(&self) -> ModelKind {
        ModelKind::Sampling
    }

    fn mean(&self, x: &[f64]) -> Result<f64> {
        Ok(self.moments(x)?.0)
    }

    fn cov(&self, x: &[f64], x2: &[f64]) -> Result<f64> {
        if key(x) == key(x2) {
            Ok(self.moments(x)?.1)
        } else {
            Ok(0.0)
        }
    }
}

/// Fits the baseline and caches its moments on `x_grid`.
pub fn sampling_baseline(
    d1: &Dataset,
    d2: &Dataset,
    spec: &AdjustmentSpec,
    x_grid: &Points,
    l: usize,
    r: usize,
    seed: u64,
) -> Result<SamplingBaseline> {
    let config = SamplingConfig {
        l,
        r,
        ..SamplingConfig::default()
    };
    SamplingBaseline::fit(d1, d2, spec, &config, seed)?.with_grid(x_grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::generators::gen_ablation;

    #[test]
    fn reproducible_and_diagonal() {
        let (d1, d2) = gen_ablation(40, 40, 0.1, 1).unwrap();
        let spec = AdjustmentSpec::backdoor("x", &[], "y");
        let grid = Points::from_scalars(&[-1.0, 0.0, 1.0]);
        let a = sampling_baseline(&d1, &d2, &spec, &grid, 20, 20, 3).unwrap();
        let b = sampling_baseline(&d1, &d2, &spec, &grid, 20, 20, 3).unwrap();
        for x in [-1.0, 0.0, 0.37] {
            assert_eq!(a.mean(&[x]).unwrap(), b.mean(&[x]).unwrap());
            assert!(a.variance(&[x]).unwrap() >= 0.0);
        }
        assert_eq!(a.cov(&[0.0], &[1.0]).unwrap(), 0.0);
        assert!(sampling_baseline(&d1, &d2, &spec, &grid, 1, 20, 3).is_err());
    }
}
