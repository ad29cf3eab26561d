//! Stage-2 regression: kernel ridge regression, exact GP regression, evidence
//! and a small gradient-ascent hyperparameter optimiser.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernel::{check_dim, cross_gram, gram, kernel_column, Kernel, RbfKernel, SpdFactor};
use crate::points::Points;

/// A kernel multiplied by a positive constant.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaled<K> {
    pub inner: K,
    pub scale: f64,
}

impl<K: Kernel> Kernel for Scaled<K> {
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }
    fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        self.scale * self.inner.eval(a, b)
    }
}

fn check_training(inputs: &Points, targets: &[f64]) -> Result<()> {
    if inputs.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            expected: inputs.len(),
            got: targets.len(),
        });
    }
    Ok(())
}

/// `f(y) = k(y, ỹ) (K + λ_f I)^{-1} t`.
#[derive(Debug, Clone)]
pub struct KrrModel<K> {
    kernel: K,
    inputs: Points,
    coef: DVector<f64>,
    lambda: f64,
    jitter_used: f64,
}

pub fn krr_fit<K: Kernel>(inputs: &Points, targets: &[f64], kernel: K, lambda: f64) -> Result<KrrModel<K>> {
    if inputs.is_empty() {
        return Err(Error::EmptyInput("krr training data"));
    }
    check_training(inputs, targets)?;
    if !(lambda > 0.0) {
        return Err(Error::invalid(format!("krr ridge must be positive, got {lambda}")));
    }
    let k = gram(&kernel, inputs)?;
    let f = SpdFactor::new(&k.matrix, lambda, "K_ỹỹ + λ_f I")?;
    let coef = f.solve_vec(&DVector::from_column_slice(targets));
    Ok(KrrModel {
        kernel,
        inputs: inputs.clone(),
        coef,
        lambda,
        jitter_used: f.jitter_used(),
    })
}

impl<K: Kernel> KrrModel<K> {
    pub fn predict(&self, y: &[f64]) -> Result<f64> {
        check_dim(self.inputs.dim(), y.len())?;
        Ok(kernel_column(&self.kernel, &self.inputs, y).dot(&self.coef))
    }

    pub fn predict_many(&self, ys: &Points) -> Result<DVector<f64>> {
        Ok(cross_gram(&self.kernel, ys, &self.inputs)? * &self.coef)
    }

    /// `A = (K + λ_f I)^{-1} t`.
    pub fn coefficients(&self) -> &DVector<f64> {
        &self.coef
    }

    pub fn inputs(&self) -> &Points {
        &self.inputs
    }

    pub fn kernel(&self) -> &K {
        &self.kernel
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn jitter_used(&self) -> f64 {
        self.jitter_used
    }
}

pub fn krr_predict<K: Kernel>(model: &KrrModel<K>, y: &[f64]) -> Result<f64> {
    model.predict(y)
}

/// Zero-mean GP regression with Gaussian noise `noise`.
#[derive(Debug, Clone)]
pub struct GpModel<K> {
    kernel: K,
    inputs: Points,
    targets: DVector<f64>,
    noise: f64,
    factor: Option<SpdFactor>,
    alpha: DVector<f64>,
}

/// Fits a GP; an empty training set yields the prior.
pub fn gp_fit<K: Kernel>(inputs: &Points, targets: &[f64], kernel: K, noise: f64) -> Result<GpModel<K>> {
    check_training(inputs, targets)?;
    if !(noise > 0.0) {
        return Err(Error::invalid(format!("gp noise must be positive, got {noise}")));
    }
    let t = DVector::from_column_slice(targets);
    if inputs.is_empty() {
        return Ok(GpModel {
            kernel,
            inputs: inputs.clone(),
            targets: t,
            noise,
            factor: None,
            alpha: DVector::zeros(0),
        });
    }
    check_dim(kernel.input_dim(), inputs.dim())?;
    let k = gram(&kernel, inputs)?;
    let f = SpdFactor::new(&k.matrix, noise, "K_ỹỹ + λ_f I")?;
    let alpha = f.solve_vec(&t);
    Ok(GpModel {
        kernel,
        inputs: inputs.clone(),
        targets: t,
        noise,
        factor: Some(f),
        alpha,
    })
}

impl<K: Kernel> GpModel<K> {
    pub fn kernel(&self) -> &K {
        &self.kernel
    }

    pub fn inputs(&self) -> &Points {
        &self.inputs
    }

    pub fn targets(&self) -> &DVector<f64> {
        &self.targets
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    /// `(K + λ_f I)^{-1} t`, empty for the prior.
    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    pub fn factor(&self) -> Option<&SpdFactor> {
        self.factor.as_ref()
    }

    pub fn mean(&self, y: &[f64]) -> f64 {
        if self.factor.is_none() {
            return 0.0;
        }
        kernel_column(&self.kernel, &self.inputs, y).dot(&self.alpha)
    }

    /// Posterior mean vector and covariance matrix at `query`.
    pub fn posterior(&self, query: &Points) -> Result<(DVector<f64>, DMatrix<f64>)> {
        if query.is_empty() {
            return Ok((DVector::zeros(0), DMatrix::zeros(0, 0)));
        }
        check_dim(self.kernel.input_dim(), query.dim())?;
        let kqq = gram(&self.kernel, query)?.matrix;
        match &self.factor {
            None => Ok((DVector::zeros(query.len()), kqq)),
            Some(f) => {
                let kqt = cross_gram(&self.kernel, query, &self.inputs)?;
                let mean = &kqt * &self.alpha;
                let v = f.solve(&kqt.transpose());
                let mut cov = kqq - &kqt * v;
                cov = crate::kernel::symmetrize(&cov);
                Ok((mean, cov))
            }
        }
    }

    /// `-½ tᵀ(K+λI)^{-1}t - ½ log|K+λI| - (M/2) log 2π`.
    pub fn log_marginal(&self) -> f64 {
        match &self.factor {
            None => 0.0,
            Some(f) => {
                let m = self.targets.len() as f64;
                -0.5 * self.targets.dot(&self.alpha)
                    - 0.5 * f.log_det()
                    - 0.5 * m * (2.0 * std::f64::consts::PI).ln()
            }
        }
    }
}

pub fn gp_posterior<K: Kernel>(model: &GpModel<K>, query: &Points) -> Result<(DVector<f64>, DMatrix<f64>)> {
    model.posterior(query)
}

pub fn gp_log_marginal<K: Kernel>(model: &GpModel<K>) -> f64 {
    model.log_marginal()
}

/// Evidence of an RBF GP and its gradient w.r.t.
/// `[log ℓ_1, …, log ℓ_D, log σ², log noise]`.
pub fn rbf_log_marginal_with_grad(
    inputs: &Points,
    targets: &[f64],
    kernel: &RbfKernel,
    noise: f64,
) -> Result<(f64, Vec<f64>)> {
    let model = gp_fit(inputs, targets, kernel.clone(), noise)?;
    let value = model.log_marginal();
    let f = model.factor.as_ref().ok_or(Error::EmptyInput("evidence training data"))?;
    let n = inputs.len();
    let ainv = f.inverse();
    let alpha = &model.alpha;
    // W = ααᵀ - A^{-1}; dL/dθ = ½ tr(W dK/dθ)
    let w = alpha * alpha.transpose() - &ainv;
    let half_tr = |dk: &DMatrix<f64>| 0.5 * w.component_mul(dk).sum();
    let mut grad: Vec<f64> = kernel
        .gram_log_lengthscale_derivs(inputs)
        .iter()
        .map(half_tr)
        .collect();
    let k = gram(kernel, inputs)?.matrix;
    grad.push(half_tr(&k));
    grad.push(0.5 * noise * (0..n).map(|i| w[(i, i)]).sum::<f64>());
    Ok((value, grad))
}

/// Log-space hyperparameters with a frozen mask and the objective trace.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperState {
    pub names: Vec<String>,
    pub log_values: Vec<f64>,
    pub frozen: Vec<bool>,
    pub trace: Vec<f64>,
}

impl HyperState {
    pub fn new(names: Vec<String>, values: &[f64]) -> Result<Self> {
        if names.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: names.len(),
                got: values.len(),
            });
        }
        if let Some(v) = values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::invalid(format!("hyperparameters must be positive, got {v}")));
        }
        Ok(HyperState {
            frozen: vec![false; names.len()],
            log_values: values.iter().map(|v| v.ln()).collect(),
            names,
            trace: Vec::new(),
        })
    }

    /// Freezes `name`, or every parameter whose name starts with `name`
    /// when there is no exact match (`lengthscale` freezes all lengthscales).
    pub fn freeze(&mut self, name: &str) -> Result<()> {
        if let Ok(i) = self.index(name) {
            self.frozen[i] = true;
            return Ok(());
        }
        let mut hit = false;
        for (n, f) in self.names.iter().zip(self.frozen.iter_mut()) {
            if n.starts_with(name) {
                *f = true;
                hit = true;
            }
        }
        if hit {
            Ok(())
        } else {
            Err(Error::invalid(format!("unknown hyperparameter `{name}`")))
        }
    }

    pub fn index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::invalid(format!("unknown hyperparameter `{name}`")))
    }

    pub fn value(&self, name: &str) -> Result<f64> {
        Ok(self.log_values[self.index(name)?].exp())
    }

    pub fn values(&self) -> Vec<f64> {
        self.log_values.iter().map(|v| v.exp()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimConfig {
    pub max_iters: usize,
    pub initial_step: f64,
    /// Largest per-coordinate move in log space per iteration.
    pub max_delta: f64,
    pub grad_tol: f64,
    pub rel_tol: f64,
    pub fd_step: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            max_iters: 200,
            initial_step: 0.1,
            max_delta: 1.0,
            grad_tol: 1e-6,
            rel_tol: 1e-10,
            fd_step: 1e-5,
        }
    }
}

/// Objective over log-space parameters: value and optional gradient.
pub type Evaluation = (f64, Option<Vec<f64>>);

fn central_differences<F>(objective: &mut F, theta: &[f64], h: f64) -> Option<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<Evaluation>,
{
    let mut g = vec![0.0; theta.len()];
    let mut probe = theta.to_vec();
    for i in 0..theta.len() {
        probe[i] = theta[i] + h;
        let up = objective(&probe).ok()?.0;
        probe[i] = theta[i] - h;
        let dn = objective(&probe).ok()?.0;
        probe[i] = theta[i];
        g[i] = (up - dn) / (2.0 * h);
    }
    g.iter().all(|v| v.is_finite()).then_some(g)
}

/// Gradient ascent with Armijo backtracking. Missing gradients fall back to
/// central differences. Frozen coordinates never move; the trace is
/// nondecreasing. A failing or NaN initial objective is an error; later
/// failures stop the search at the last valid state.
pub fn optimize_hypers<F>(mut objective: F, init: HyperState, config: &OptimConfig) -> Result<HyperState>
where
    F: FnMut(&[f64]) -> Result<Evaluation>,
{
    let mut state = init;
    let (mut value, mut grad) = objective(&state.log_values)?;
    if !value.is_finite() {
        return Err(Error::Numeric("initial hyperparameter objective is not finite".into()));
    }
    state.trace.push(value);
    let mut step = config.initial_step;
    for _ in 0..config.max_iters {
        let mut g = match grad.take() {
            Some(g) => g,
            None => match central_differences(&mut objective, &state.log_values, config.fd_step) {
                Some(g) => g,
                None => break,
            },
        };
        for (gi, &fz) in g.iter_mut().zip(&state.frozen) {
            if fz || !gi.is_finite() {
                *gi = 0.0;
            }
        }
        let gnorm2: f64 = g.iter().map(|v| v * v).sum();
        if gnorm2.sqrt() < config.grad_tol {
            break;
        }
        let mut accepted = None;
        for _ in 0..40 {
            let scale = {
                let biggest = g.iter().fold(0.0f64, |m, v| m.max((step * v).abs()));
                if biggest > config.max_delta {
                    config.max_delta / biggest
                } else {
                    1.0
                }
            };
            let cand: Vec<f64> = state
                .log_values
                .iter()
                .zip(&g)
                .map(|(t, gi)| t + step * scale * gi)
                .collect();
            if let Ok((v, gr)) = objective(&cand) {
                if v.is_finite() && v >= value + 1e-4 * step * scale * gnorm2 {
                    accepted = Some((cand, v, gr));
                    break;
                }
            }
            step *= 0.5;
            if step < 1e-16 {
                break;
            }
        }
        let Some((cand, v, gr)) = accepted else { break };
        let improvement = v - value;
        state.log_values = cand;
        value = v;
        grad = gr;
        state.trace.push(value);
        step *= 2.0;
        if improvement <= config.rel_tol * value.abs().max(1.0) {
            break;
        }
    }
    Ok(state)
}

/// Fits an RBF GP by maximising its evidence over `[log ℓ.., log σ², log noise]`.
/// Entries of `frozen` name parameters left at their initial values.
pub fn fit_rbf_gp(
    inputs: &Points,
    targets: &[f64],
    init_kernel: &RbfKernel,
    init_noise: f64,
    frozen: &[&str],
    config: &OptimConfig,
) -> Result<(GpModel<RbfKernel>, HyperState)> {
    let d = init_kernel.input_dim();
    let mut names: Vec<String> = (0..d).map(|i| format!("lengthscale{i}")).collect();
    names.push("signal_variance".into());
    names.push("noise".into());
    let mut values = init_kernel.lengthscales().to_vec();
    values.push(init_kernel.signal_variance());
    values.push(init_noise);
    let mut state = HyperState::new(names, &values)?;
    for f in frozen {
        state.freeze(f)?;
    }
    let unpack = |theta: &[f64]| -> Result<(RbfKernel, f64)> {
        let ls = theta[..d].iter().map(|v| v.exp()).collect();
        Ok((RbfKernel::new(ls, theta[d].exp())?, theta[d + 1].exp()))
    };
    let state = optimize_hypers(
        |theta| {
            let (k, noise) = unpack(theta)?;
            let (v, g) = rbf_log_marginal_with_grad(inputs, targets, &k, noise)?;
            Ok((v, Some(g)))
        },
        state,
        config,
    )?;
    let (k, noise) = unpack(&state.log_values)?;
    Ok((gp_fit(inputs, targets, k, noise)?, state))
}

/// Sample variance with denominator `n`; zero for fewer than two values.
pub fn variance(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n
}
