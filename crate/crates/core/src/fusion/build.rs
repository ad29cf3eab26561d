//! End-to-end fitting of the shared pieces behind every fusion surrogate.

use std::sync::Arc;

use crate::bayes_cme::{default_eta, BayesCmeModel, DEFAULT_R_NUGGET};
use crate::embedding::{build_omega, AdjustmentSpec, OmegaFeatures};
use crate::error::{Error, Result};
use crate::fusion::models::{BayesImeModel, BayesImpModel, BayesImpOptions, ImpModel};
use crate::gp::{fit_rbf_gp, gp_fit, optimize_hypers, variance, GpModel, HyperState, KrrModel, OptimConfig, Scaled};
use crate::kernel::{gram, NuclearKernel, RbfKernel};
use crate::points::{median_heuristic, Dataset, Points};

#[derive(Debug, Clone, PartialEq)]
pub struct FusionConfig {
    /// Initial embedding ridge `λ`.
    pub ridge: f64,
    /// Initial D2 noise `λ_f`; `None` uses `0.1 · var(t)`.
    pub ridge_f: Option<f64>,
    /// Front-door inner ridge `λ_z`; `None` reuses `λ`.
    pub inner_ridge: Option<f64>,
    pub r_nugget: f64,
    /// Measure width `η`; `None` uses `2 · median ‖y‖` over pooled mediators.
    pub eta: Option<f64>,
    /// Fixed lengthscales; `None` uses the median heuristic.
    pub lengthscale_x: Option<f64>,
    pub lengthscale_z: Option<f64>,
    /// Fixed outcome-kernel lengthscale; `None` uses the median heuristic
    /// on pooled mediators, or D2 evidence when `learn_lengthscale_y`.
    pub lengthscale_y: Option<f64>,
    pub learn_lengthscale_y: bool,
    /// Learn embedding hyperparameters by the embedding likelihood.
    pub optimize: bool,
    /// Embedding hyperparameters held fixed (`ridge`, `lengthscale_x0`, …, `eta`).
    pub frozen: Vec<String>,
    pub optim: OptimConfig,
    pub bayesimp: BayesImpOptions,
    /// D2 target column.
    pub target: String,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            ridge: 0.1,
            ridge_f: None,
            inner_ridge: None,
            r_nugget: DEFAULT_R_NUGGET,
            eta: None,
            lengthscale_x: None,
            lengthscale_z: None,
            lengthscale_y: None,
            learn_lengthscale_y: false,
            optimize: true,
            frozen: vec!["eta".to_string()],
            optim: OptimConfig::default(),
            bayesimp: BayesImpOptions::default(),
            target: "t".to_string(),
        }
    }
}

/// Fitted stage-1 embedding and stage-2 regressions shared by all surrogates.
#[derive(Debug, Clone)]
pub struct FusionFit {
    pub ky: RbfKernel,
    pub cme: Arc<BayesCmeModel<OmegaFeatures>>,
    /// `f ~ GP(0, k_y)` on D2.
    pub f_ky: Arc<GpModel<RbfKernel>>,
    /// `f ~ GP(0, c·r)` on D2.
    pub f_r: Arc<GpModel<Scaled<NuclearKernel>>>,
    pub cme_state: Option<HyperState>,
    pub f_r_state: HyperState,
    pub bayesimp_options: BayesImpOptions,
}

fn isotropic(points: &Points, fixed: Option<f64>) -> Result<RbfKernel> {
    RbfKernel::isotropic(points.dim(), fixed.unwrap_or_else(|| median_heuristic(points)), 1.0)
}

pub fn fit_fusion(d1: &Dataset, d2: &Dataset, spec: &AdjustmentSpec, config: &FusionConfig) -> Result<FusionFit> {
    spec.validate(d1)?;
    if d1.is_empty() {
        return Err(Error::EmptyInput("D1"));
    }
    if d2.is_empty() {
        return Err(Error::EmptyInput("D2"));
    }
    let y = d1.points(&spec.mediator)?;
    let y2 = d2.points(&spec.mediator)?;
    let t = d2.column(&config.target)?;
    let pooled = y.concat(&y2)?;

    let var_t = variance(t);
    let var_t = if var_t > 0.0 { var_t } else { 1.0 };
    let noise0 = config.ridge_f.unwrap_or(0.1 * var_t);
    let fixed = match (config.lengthscale_y, config.learn_lengthscale_y) {
        (Some(l), _) => Some(l),
        (None, false) => Some(median_heuristic(&pooled)),
        (None, true) => None,
    };
    let f_ky = fit_outcome_gp(&y2, t, &pooled, fixed, noise0, &config.optim)?;
    let ky = f_ky.kernel().clone();

    let x = d1.points(&spec.treatment)?;
    let kx = isotropic(&x, config.lengthscale_x)?;
    let kz = if spec.adjustment.is_empty() {
        None
    } else {
        Some(isotropic(&d1.points(&spec.adjustment)?, config.lengthscale_z)?)
    };
    let mut spec = spec.clone();
    if spec.inner_ridge.is_none() {
        spec.inner_ridge = config.inner_ridge;
    }
    let features = build_omega(d1, &spec, &kx, kz.as_ref(), config.ridge)?;
    let eta = config.eta.unwrap_or_else(|| default_eta(&pooled));
    let mut cme = BayesCmeModel::fit(features, &y, ky.clone(), eta, config.r_nugget)?;
    let mut cme_state = None;
    if config.optimize {
        let frozen: Vec<&str> = config.frozen.iter().map(String::as_str).collect();
        let (m, s) = cme.optimize(&frozen, &config.optim)?;
        cme = m;
        cme_state = Some(s);
    }

    let (f_r, f_r_state) = fit_nuclear_gp(&y2, t, &NuclearKernel::new(ky.clone(), cme.eta())?, noise0, &config.optim)?;

    Ok(FusionFit {
        ky,
        cme: Arc::new(cme),
        f_ky: Arc::new(f_ky),
        f_r: Arc::new(f_r),
        cme_state,
        f_r_state,
        bayesimp_options: config.bayesimp.clone(),
    })
}

/// Lengthscale multipliers (of the median heuristic) tried when learning `k_y`.
const LENGTHSCALE_STARTS: [f64; 3] = [1.0, 0.25, 0.0625];

/// `f ~ GP(0, k_y)` on D2 by evidence. A fixed lengthscale is kept; otherwise
/// the best of several restarts from fractions of the median heuristic on
/// `pooled` wins.
pub fn fit_outcome_gp(
    inputs: &Points,
    targets: &[f64],
    pooled: &Points,
    lengthscale: Option<f64>,
    noise0: f64,
    config: &OptimConfig,
) -> Result<GpModel<RbfKernel>> {
    let v = variance(targets);
    let v = if v > 0.0 { v } else { 1.0 };
    if let Some(l) = lengthscale {
        let k0 = RbfKernel::isotropic(inputs.dim(), l, v)?;
        return Ok(fit_rbf_gp(inputs, targets, &k0, noise0, &["lengthscale"], config)?.0);
    }
    let median = median_heuristic(pooled);
    let mut best: Option<GpModel<RbfKernel>> = None;
    for m in LENGTHSCALE_STARTS {
        let k0 = RbfKernel::isotropic(inputs.dim(), m * median, v)?;
        let (gp, _) = fit_rbf_gp(inputs, targets, &k0, noise0, &[], config)?;
        if best.as_ref().is_none_or(|b| gp.log_marginal() > b.log_marginal()) {
            best = Some(gp);
        }
    }
    best.ok_or(Error::EmptyInput("lengthscale restarts"))
}

/// `f ~ GP(0, c·r)`: scale `c` and noise learned by evidence (finite-difference gradients).
pub fn fit_nuclear_gp(
    inputs: &Points,
    targets: &[f64],
    r: &NuclearKernel,
    noise0: f64,
    config: &OptimConfig,
) -> Result<(GpModel<Scaled<NuclearKernel>>, HyperState)> {
    let rg = gram(r, inputs)?.matrix;
    let mean_diag = rg.trace() / inputs.len() as f64;
    let var_t = variance(targets);
    let c0 = if var_t > 0.0 { var_t / mean_diag } else { 1.0 / mean_diag };
    let state = HyperState::new(vec!["scale".into(), "noise".into()], &[c0, noise0])?;
    let fit = |theta: &[f64]| {
        gp_fit(
            inputs,
            targets,
            Scaled {
                inner: r.clone(),
                scale: theta[0].exp(),
            },
            theta[1].exp(),
        )
    };
    let state = optimize_hypers(|theta| Ok((fit(theta)?.log_marginal(), None)), state, config)?;
    Ok((fit(&state.log_values)?, state))
}

impl FusionFit {
    pub fn imp(&self) -> Result<ImpModel<OmegaFeatures>> {
        ImpModel::new(self.cme.clone(), self.f_ky.clone())
    }

    /// BayesIME with `f` the kernel ridge regression sharing `k_y` and `λ_f` with the IMP GP.
    pub fn bayesime(&self) -> Result<BayesImeModel<OmegaFeatures>> {
        let krr = self.krr()?;
        BayesImeModel::from_krr(self.cme.clone(), &krr)
    }

    pub fn krr(&self) -> Result<KrrModel<RbfKernel>> {
        crate::gp::krr_fit(
            self.f_ky.inputs(),
            self.f_ky.targets().as_slice(),
            self.ky.clone(),
            self.f_ky.noise(),
        )
    }

    pub fn bayesimp(&self) -> Result<BayesImpModel<OmegaFeatures>> {
        self.bayesimp_with(self.bayesimp_options.clone())
    }

    pub fn bayesimp_with(&self, options: BayesImpOptions) -> Result<BayesImpModel<OmegaFeatures>> {
        BayesImpModel::new(self.cme.clone(), self.f_r.clone(), options)
    }
}
