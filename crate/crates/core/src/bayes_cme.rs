//! Bayesian conditional (and interventional) mean embeddings.
//!
//! The embedding is a GP over `(x, y)` with prior kernel `k(x,x')·r(y,y')`,
//! where `r` is the nuclear dominant kernel of `k_y`. The `R_yy` ridge is
//! carried as a white-noise nugget on `r`, so `R^{-1} r(Y, y_j) = e_j` holds
//! exactly at training mediators.

use nalgebra::{DMatrix, DVector};

use crate::embedding::{InputFeatures, OmegaFeatures};
use crate::error::{Error, Result};
use crate::gp::{optimize_hypers, HyperState, OptimConfig};
use crate::kernel::{check_dim, gram, kernel_column, Kernel, NuclearKernel, Nugget, RbfKernel, SpdFactor};
use crate::points::Points;

/// Default relative nugget on `R_yy` (times `trace / N`).
pub const DEFAULT_R_NUGGET: f64 = 1e-8;

/// `2 · median ‖y‖`, falling back to 1 when the points sit at the origin.
pub fn default_eta(points: &Points) -> f64 {
    let mut norms: Vec<f64> = points.rows().map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    if norms.is_empty() {
        return 1.0;
    }
    norms.sort_by(|a, b| a.total_cmp(b));
    let n = norms.len();
    let med = if n % 2 == 1 {
        norms[n / 2]
    } else {
        0.5 * (norms[n / 2 - 1] + norms[n / 2])
    };
    if med > 0.0 {
        2.0 * med
    } else {
        1.0
    }
}

/// The printed marginal likelihood from raw Gram matrices:
/// `-N/2 (log|K + λI| + log|R|) - ½ tr((K + λI)^{-1} K_yy R^{-1} K_yy)`.
pub fn bayescme_log_likelihood_from_grams(
    kxx: &DMatrix<f64>,
    ridge: f64,
    kyy: &DMatrix<f64>,
    ryy: &DMatrix<f64>,
) -> Result<f64> {
    let a = SpdFactor::new(kxx, ridge, "K + λI")?;
    let r = SpdFactor::new(ryy, 0.0, "R_yy")?;
    Ok(likelihood_parts(&a, &r, kyy).0)
}

fn likelihood_parts(a: &SpdFactor, r: &SpdFactor, kyy: &DMatrix<f64>) -> (f64, DMatrix<f64>) {
    let n = kyy.nrows() as f64;
    let rinv_k = r.solve(kyy);
    let w = kyy * &rinv_k;
    let ainv_w = a.solve(&w);
    let value = -0.5 * n * (a.log_det() + r.log_det()) - 0.5 * ainv_w.trace();
    (value, rinv_k)
}

#[derive(Debug, Clone)]
pub struct BayesCmeModel<F> {
    features: F,
    mediator: Points,
    ky: RbfKernel,
    r: Nugget<NuclearKernel>,
    r_nugget_rel: f64,
    kyy: DMatrix<f64>,
    ryy: DMatrix<f64>,
    r_factor: SpdFactor,
    /// `R^{-1} K_yy`.
    h: DMatrix<f64>,
}

/// Interventional variant over Ω features.
pub type CausalBayesCme = BayesCmeModel<OmegaFeatures>;

impl<F: InputFeatures> BayesCmeModel<F> {
    pub fn fit(features: F, mediator: &Points, ky: RbfKernel, eta: f64, r_nugget_rel: f64) -> Result<Self> {
        if mediator.is_empty() {
            return Err(Error::EmptyInput("mediator samples"));
        }
        if mediator.len() != features.len() {
            return Err(Error::DimensionMismatch {
                expected: features.len(),
                got: mediator.len(),
            });
        }
        if !(r_nugget_rel >= 0.0) {
            return Err(Error::invalid(format!("R nugget must be nonnegative, got {r_nugget_rel}")));
        }
        check_dim(ky.input_dim(), mediator.dim())?;
        let nuclear = NuclearKernel::new(ky.clone(), eta)?;
        let raw = gram(&nuclear, mediator)?.matrix;
        let nugget = r_nugget_rel * raw.trace() / mediator.len() as f64;
        let r = Nugget { inner: nuclear, nugget };
        let ryy = gram(&r, mediator)?.matrix;
        let r_factor = SpdFactor::new(&ryy, 0.0, "R_yy").map_err(|e| match e {
            Error::Singular { jitter, .. } => Error::Singular {
                what: format!("R_yy (measure width η = {eta} may be too small or too large)"),
                jitter,
            },
            other => other,
        })?;
        let kyy = gram(&ky, mediator)?.matrix;
        let h = r_factor.solve(&kyy);
        Ok(BayesCmeModel {
            features,
            mediator: mediator.clone(),
            ky,
            r,
            r_nugget_rel,
            kyy,
            ryy,
            r_factor,
            h,
        })
    }

    pub fn features(&self) -> &F {
        &self.features
    }

    pub fn mediator(&self) -> &Points {
        &self.mediator
    }

    pub fn ky(&self) -> &RbfKernel {
        &self.ky
    }

    /// The nuclear kernel including the `R_yy` nugget.
    pub fn r_kernel(&self) -> &Nugget<NuclearKernel> {
        &self.r
    }

    pub fn eta(&self) -> f64 {
        self.r.inner.eta()
    }

    pub fn kyy(&self) -> &DMatrix<f64> {
        &self.kyy
    }

    pub fn ryy(&self) -> &DMatrix<f64> {
        &self.ryy
    }

    pub fn r_factor(&self) -> &SpdFactor {
        &self.r_factor
    }

    /// `R^{-1} K_yy`.
    pub fn r_inv_kyy(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn weights(&self, x: &[f64]) -> Result<DVector<f64>> {
        self.features.weights(x)
    }

    /// `F(x, x')`: prior inner product of the input features.
    pub fn prior_inner(&self, x: &[f64], x2: &[f64]) -> Result<f64> {
        self.features.prior_inner(x, x2)
    }

    /// `G(x, x') = φ(x)ᵀ (K + λI)^{-1} φ(x')`.
    pub fn posterior_inner(&self, x: &[f64], x2: &[f64]) -> Result<f64> {
        Ok(self.features.weights(x)?.dot(&self.features.phi(x2)?))
    }

    /// `m_μ(x, y) = w(x)ᵀ K_yy R^{-1} r(Y, y)`.
    pub fn mean(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        check_dim(self.mediator.dim(), y.len())?;
        let v = &self.h * self.features.weights(x)?;
        Ok(v.dot(&kernel_column(&self.r, &self.mediator, y)))
    }

    /// Classical embedding evaluation `k_y(y, Y) w(x)`.
    pub fn classical_mean(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        check_dim(self.mediator.dim(), y.len())?;
        Ok(kernel_column(&self.ky, &self.mediator, y).dot(&self.features.weights(x)?))
    }

    /// `κ_μ((x,y),(x',y')) = F(x,x') r(y,y') - G(x,x') r(y,Y) R^{-1} r(Y,y')`.
    pub fn cov(&self, x: &[f64], y: &[f64], x2: &[f64], y2: &[f64]) -> Result<f64> {
        check_dim(self.mediator.dim(), y.len())?;
        check_dim(self.mediator.dim(), y2.len())?;
        let f = self.prior_inner(x, x2)?;
        let g = self.posterior_inner(x, x2)?;
        let r1 = kernel_column(&self.r, &self.mediator, y);
        let r2 = kernel_column(&self.r, &self.mediator, y2);
        let quad = r1.dot(&self.r_factor.solve_vec(&r2));
        Ok(f * self.r.eval(y, y2) - g * quad)
    }

    pub fn log_likelihood(&self) -> f64 {
        likelihood_parts(self.features.factor(), &self.r_factor, &self.kyy).0
    }

    /// Hyperparameter names in gradient order: `ridge`, feature lengthscales, `eta`.
    pub fn hyper_names(&self) -> Vec<String> {
        let mut names = vec!["ridge".to_string()];
        names.extend(self.features.hyper_names());
        names.push("eta".to_string());
        names
    }

    pub fn hyper_values(&self) -> Vec<f64> {
        let mut v = vec![self.features.ridge()];
        v.extend(self.features.hyper_values());
        v.push(self.eta());
        v
    }

    /// Analytic gradient of [`log_likelihood`](Self::log_likelihood) w.r.t. the
    /// log of each hyperparameter.
    pub fn log_likelihood_grad(&self) -> Vec<f64> {
        let n = self.kyy.nrows() as f64;
        let a = self.features.factor();
        let ainv = a.inverse();
        let w = &self.kyy * &self.h;
        let ainv_w_ainv = &ainv * &w * &ainv;
        let d_a = |da: &DMatrix<f64>| -> f64 {
            -0.5 * n * ainv.component_mul(da).sum() + 0.5 * ainv_w_ainv.component_mul(da).sum()
        };
        let mut grad = Vec::new();
        let lam = self.features.ridge();
        grad.push(-0.5 * n * lam * ainv.trace() + 0.5 * lam * ainv_w_ainv.trace());
        for dk in self.features.gram_derivs() {
            grad.push(d_a(&dk));
        }
        // R-side: dR from log η
        let nuclear = &self.r.inner;
        let m = self.mediator.len();
        let mut dr = DMatrix::from_fn(m, m, |i, j| nuclear.d_log_eta(self.mediator.row(i), self.mediator.row(j)));
        // the nugget tracks trace(R)/N, so it moves with η too
        let d_nugget = self.r_nugget_rel * dr.trace() / m as f64;
        for i in 0..m {
            for j in 0..m {
                if self.mediator.row(i) == self.mediator.row(j) {
                    dr[(i, j)] += d_nugget;
                }
            }
        }
        let rinv = self.r_factor.inverse();
        // ½ tr(A^{-1} K R^{-1} dR R^{-1} K) = ½ tr(Hᵀ... ) with H = R^{-1}K
        let inner = self.h.transpose() * &dr * &self.h;
        grad.push(-0.5 * n * rinv.component_mul(&dr).sum() + 0.5 * ainv.component_mul(&inner).sum());
        grad
    }

    /// Same data with new hyperparameters (`hyper_names` order, natural scale).
    pub fn with_hypers(&self, values: &[f64]) -> Result<Self>
    where
        F: Sized,
    {
        let k = self.features.hyper_values().len();
        if values.len() != k + 2 {
            return Err(Error::DimensionMismatch {
                expected: k + 2,
                got: values.len(),
            });
        }
        let features = self.features.rebuild(&values[1..=k], values[0])?;
        BayesCmeModel::fit(features, &self.mediator, self.ky.clone(), values[k + 1], self.r_nugget_rel)
    }

    /// Maximises the likelihood. `frozen` names stay fixed; `eta` is typically frozen.
    pub fn optimize(&self, frozen: &[&str], config: &OptimConfig) -> Result<(Self, HyperState)>
    where
        F: Sized,
    {
        let mut state = HyperState::new(self.hyper_names(), &self.hyper_values())?;
        for name in frozen {
            state.freeze(name)?;
        }
        let state = optimize_hypers(
            |theta| {
                let vals: Vec<f64> = theta.iter().map(|v| v.exp()).collect();
                let m = self.with_hypers(&vals)?;
                Ok((m.log_likelihood(), Some(m.log_likelihood_grad())))
            },
            state,
            config,
        )?;
        Ok((self.with_hypers(&state.values())?, state))
    }
}

/// Fits a Bayesian interventional embedding over Ω features.
pub fn causal_bayescme(features: OmegaFeatures, mediator: &Points, ky: RbfKernel, eta: f64) -> Result<CausalBayesCme> {
    BayesCmeModel::fit(features, mediator, ky, eta, DEFAULT_R_NUGGET)
}
