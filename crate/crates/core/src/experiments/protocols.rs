//! Per-seed replicates of the ablation, calibration and optimisation studies.

use std::sync::Arc;

use crate::bo::{bo_run, estimate_noise, iterations_to_within, BoOptions, BoTrace, NoiseMode, SamplingBaseline, SamplingConfig, Surrogate};
use crate::error::Result;
use crate::experiments::calibration::{calibration_cells, CalibrationCell};
use crate::experiments::generators::Generator;
use crate::experiments::oracle::{true_effect_curve, InterventionOracle};
use crate::fusion::{fit_fusion, moment_match_to_gp, FusionConfig, ModelKind, TreatmentEffect};
use crate::kernel::RbfKernel;
use crate::points::{Dataset, Points};

/// The four surrogates compared in the ablation and calibration studies.
pub const ABLATION_METHODS: [ModelKind; 4] = [ModelKind::Imp, ModelKind::BayesIme, ModelKind::BayesImp, ModelKind::Sampling];

/// Data sizes and model settings shared by every replicate of a study.
#[derive(Debug, Clone)]
pub struct StudySetup {
    pub generator: Arc<Generator>,
    pub treatment: String,
    pub n: usize,
    pub m: usize,
    pub fusion: FusionConfig,
    pub sampling: SamplingConfig,
}

impl StudySetup {
    pub fn new(generator: Arc<Generator>, n: usize, m: usize) -> Self {
        let treatment = generator.default_treatment().to_string();
        StudySetup {
            generator,
            treatment,
            n,
            m,
            fusion: FusionConfig::default(),
            sampling: SamplingConfig::default(),
        }
    }

    pub fn data(&self, seed: u64) -> Result<(Dataset, Dataset)> {
        self.generator.generate(self.n, self.m, seed)
    }

    /// Fits all four surrogates on the replicate's data; the sampling
    /// baseline caches its moments on `grid`.
    pub fn fit_all(&self, seed: u64, grid: &Points) -> Result<Vec<(ModelKind, Box<dyn TreatmentEffect>)>> {
        let (d1, d2) = self.data(seed)?;
        let spec = self.generator.adjustment_spec(&self.treatment)?;
        let fit = fit_fusion(&d1, &d2, &spec, &self.fusion)?;
        let sampling = SamplingBaseline::fit(&d1, &d2, &spec, &self.sampling, seed)?.with_grid(grid)?;
        Ok(vec![
            (ModelKind::Imp, Box::new(fit.imp()?)),
            (ModelKind::BayesIme, Box::new(fit.bayesime()?)),
            (ModelKind::BayesImp, Box::new(fit.bayesimp()?)),
            (ModelKind::Sampling, Box::new(sampling)),
        ])
    }

    pub fn oracle(&self, samples: usize) -> Result<InterventionOracle> {
        InterventionOracle::new(self.generator.clone(), &self.treatment, samples)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub x: f64,
    pub mean: f64,
    pub std: f64,
}

pub fn effect_curve<T: TreatmentEffect + ?Sized>(model: &T, xs: &[f64]) -> Result<Vec<CurvePoint>> {
    xs.iter()
        .map(|&x| {
            Ok(CurvePoint {
                x,
                mean: model.mean(&[x])?,
                std: model.variance(&[x])?.max(0.0).sqrt(),
            })
        })
        .collect()
}

/// Shape of a standard-deviation curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveDiagnostics {
    pub std_min: f64,
    pub std_max: f64,
    /// Std at the left end over std at the point nearest `center`.
    pub spike_ratio: f64,
    /// Total x-length where the std exceeds twice its value at `center`.
    pub wide_width: f64,
}

pub fn curve_diagnostics(curve: &[CurvePoint], center: f64) -> CurveDiagnostics {
    let std_min = curve.iter().map(|p| p.std).fold(f64::INFINITY, f64::min);
    let std_max = curve.iter().map(|p| p.std).fold(f64::NEG_INFINITY, f64::max);
    let c = curve
        .iter()
        .min_by(|a, b| (a.x - center).abs().total_cmp(&(b.x - center).abs()))
        .map_or(f64::NAN, |p| p.std);
    let spike_ratio = curve.first().map_or(f64::NAN, |p| p.std / c);
    let wide_width = curve
        .windows(2)
        .filter(|w| w[0].std > 2.0 * c && w[1].std > 2.0 * c)
        .map(|w| w[1].x - w[0].x)
        .sum();
    CurveDiagnostics {
        std_min,
        std_max,
        spike_ratio,
        wide_width,
    }
}

/// Mean and std curves of every method for one seed.
pub fn ablation_replicate(setup: &StudySetup, seed: u64, xs: &[f64]) -> Result<Vec<(ModelKind, Vec<CurvePoint>)>> {
    let models = setup.fit_all(seed, &Points::from_scalars(xs))?;
    models.iter().map(|(k, m)| Ok((*k, effect_curve(m.as_ref(), xs)?))).collect()
}

/// Ground-truth effect on `xs` by Monte Carlo.
pub fn truth_curve(setup: &StudySetup, xs: &[f64], mc_samples: usize, seed: u64) -> Result<Vec<f64>> {
    Ok(true_effect_curve(&setup.oracle(1)?, xs, mc_samples, seed)?.into_iter().map(|e| e.mean).collect())
}

/// Predictive moments paired with the truth, per method, for one seed.
pub fn calibration_replicate(setup: &StudySetup, seed: u64, xs: &[f64], truths: &[f64]) -> Result<Vec<(ModelKind, Vec<CalibrationCell>)>> {
    let models = setup.fit_all(seed, &Points::from_scalars(xs))?;
    models.iter().map(|(k, m)| Ok((*k, calibration_cells(m.as_ref(), xs, truths)?))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoMethod {
    /// Moment-matched BayesIMP prior.
    BayesImp,
    /// CBO-style prior from the sampling baseline.
    Sampling,
    /// Zero-mean RBF prior.
    PlainGp,
}

impl BoMethod {
    pub const ALL: [BoMethod; 3] = [BoMethod::BayesImp, BoMethod::Sampling, BoMethod::PlainGp];

    pub fn name(&self) -> &'static str {
        match self {
            BoMethod::BayesImp => "BayesIMP",
            BoMethod::Sampling => "Sampling",
            BoMethod::PlainGp => "PlainGP",
        }
    }
}

#[derive(Debug, Clone)]
pub struct BoSettings {
    pub grid: Points,
    pub budget: usize,
    pub noise: NoiseMode,
    /// Treatment value of the pilot queries.
    pub pilot_x: f64,
    pub oracle_samples: usize,
    pub options: BoOptions,
    /// Prior kernel of the plain GP and the extra term of the sampling prior.
    pub baseline_kernel: RbfKernel,
}

/// One optimisation trace per method for one seed, all sharing the pilot noise estimate.
pub fn bo_replicate(setup: &StudySetup, seed: u64, settings: &BoSettings) -> Result<Vec<(BoMethod, BoTrace)>> {
    let (d1, d2) = setup.data(seed)?;
    let spec = setup.generator.adjustment_spec(&setup.treatment)?;
    let oracle = setup.oracle(settings.oracle_samples)?;
    let noise = estimate_noise(&oracle, settings.pilot_x, settings.noise, seed)?;
    let grid = &settings.grid;
    let fit = fit_fusion(&d1, &d2, &spec, &setup.fusion)?;
    let bayesimp = Surrogate::new(moment_match_to_gp(&fit.bayesimp()?, grid)?, noise)?;
    let sampling = SamplingBaseline::fit(&d1, &d2, &spec, &setup.sampling, seed)?.with_grid(grid)?;
    let sampling = Surrogate::causal_prior(&sampling, grid, &settings.baseline_kernel, noise)?;
    let plain = Surrogate::zero_prior(grid, &settings.baseline_kernel, noise)?;
    Ok([(BoMethod::BayesImp, bayesimp), (BoMethod::Sampling, sampling), (BoMethod::PlainGp, plain)]
        .into_iter()
        .map(|(k, s)| (k, bo_run(&oracle, s, settings.budget, seed, &settings.options)))
        .collect())
}

/// Iterations needed by each trace to come within `tol` of the optimum of `truth` on the grid.
pub fn race_iterations(traces: &[(BoMethod, BoTrace)], settings: &BoSettings, truth: &[f64], tol: f64) -> Vec<(BoMethod, usize)> {
    let xs: Vec<f64> = settings.grid.rows().map(|r| r[0]).collect();
    traces
        .iter()
        .map(|(k, t)| (*k, iterations_to_within(t, &xs, truth, tol, settings.options.direction)))
        .collect()
}

/// Linear-interpolation quantile of unsorted data.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.25), 2.0);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn diagnostics_of_a_v_shape() {
        let curve: Vec<CurvePoint> = (-4..=4)
            .map(|i| CurvePoint {
                x: i as f64,
                mean: 0.0,
                std: 1.0 + (i as f64).abs(),
            })
            .collect();
        let d = curve_diagnostics(&curve, 0.0);
        assert_eq!(d.std_min, 1.0);
        assert_eq!(d.std_max, 5.0);
        assert_eq!(d.spike_ratio, 5.0);
        // std > 2 for |x| ≥ 2: [−4,−2] and [2,4]
        assert_eq!(d.wide_width, 4.0);
    }
}
