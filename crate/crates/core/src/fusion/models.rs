//! The three treatment-effect surrogates for `g(x) = ⟨f, μ_{Y|do(X)=x}⟩`:
//! GP `f` with a point-estimate embedding ([`ImpModel`]), point-estimate `f`
//! with a GP embedding ([`BayesImeModel`]), and GPs on both ([`BayesImpModel`]).
//!
//! Throughout, `w(x) = (K + λI)^{-1} φ(x)`, `F(x,x')` is the prior inner
//! product of the input features and `G(x,x') = w(x)ᵀ φ(x')`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::bayes_cme::BayesCmeModel;
use crate::embedding::InputFeatures;
use crate::error::{Error, Result};
use crate::fusion::finite::{prepare_landmarks, FiniteGp};
use crate::fusion::moments::inner_product_cov;
use crate::fusion::{ModelKind, TreatmentEffect};
use crate::gp::{GpModel, KrrModel, Scaled};
use crate::kernel::{cross_gram, gram, NuclearKernel, RbfKernel, SpdFactor};
use crate::points::Points;

struct GridParts {
    w: DMatrix<f64>,
    f: DMatrix<f64>,
    g: DMatrix<f64>,
}

fn grid_parts<F: InputFeatures>(features: &F, grid: &Points) -> Result<GridParts> {
    let phi = features.phi_matrix(grid)?;
    let w = features.factor().solve(&phi);
    let g = crate::kernel::symmetrize(&(w.transpose() * &phi));
    let f = features.prior_inner_matrix(grid)?;
    Ok(GridParts { w, f, g })
}

/// GP `f ~ GP(0, k_y)` fitted on D2, embedding as a ridge-regression estimate.
#[derive(Debug, Clone)]
pub struct ImpModel<F> {
    cme: Arc<BayesCmeModel<F>>,
    f: Arc<GpModel<RbfKernel>>,
    f_mean: DVector<f64>,
    f_cov: DMatrix<f64>,
}

impl<F: InputFeatures> ImpModel<F> {
    pub fn new(cme: Arc<BayesCmeModel<F>>, f: Arc<GpModel<RbfKernel>>) -> Result<Self> {
        let (f_mean, f_cov) = f.posterior(cme.mediator())?;
        Ok(ImpModel { cme, f, f_mean, f_cov })
    }

    /// `m_f` at the D1 mediator samples.
    pub fn f_mean_at_mediator(&self) -> &DVector<f64> {
        &self.f_mean
    }

    pub fn f_model(&self) -> &GpModel<RbfKernel> {
        &self.f
    }
}

impl<F: InputFeatures> TreatmentEffect for ImpModel<F> {
    fn kind(&self) -> ModelKind {
        ModelKind::Imp
    }

    fn mean(&self, x: &[f64]) -> Result<f64> {
        Ok(self.cme.weights(x)?.dot(&self.f_mean))
    }

    fn cov(&self, x: &[f64], x2: &[f64]) -> Result<f64> {
        let w1 = self.cme.weights(x)?;
        let w2 = self.cme.weights(x2)?;
        Ok(w1.dot(&(&self.f_cov * w2)))
    }

    fn grid_moments(&self, grid: &Points) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let phi = self.cme.features().phi_matrix(grid)?;
        let w = self.cme.features().factor().solve(&phi);
        Ok((w.transpose() * &self.f_mean, w.transpose() * &self.f_cov * &w))
    }
}

/// Point-estimate `f = Σ_j A_j k_y(·, p_j)` paired with the Bayesian embedding.
#[derive(Debug, Clone)]
pub struct BayesImeModel<F> {
    cme: Arc<BayesCmeModel<F>>,
    points: Points,
    coef: DVector<f64>,
    /// `K_yy R^{-1} R_{Y p} A`.
    v_mean: DVector<f64>,
    b: f64,
    c: f64,
}

impl<F: InputFeatures> BayesImeModel<F> {
    /// General kernel expansion of `f` on `points` with coefficients `coef`.
    pub fn new(cme: Arc<BayesCmeModel<F>>, points: Points, coef: DVector<f64>) -> Result<Self> {
        if points.len() != coef.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                got: coef.len(),
            });
        }
        let r = cme.r_kernel();
        let ryp = cross_gram(r, cme.mediator(), &points)?;
        let rpp = gram(r, &points)?.matrix;
        let ryp_a = &ryp * &coef;
        let v_mean = cme.r_inv_kyy().transpose() * &ryp_a;
        let b = coef.dot(&(&rpp * &coef));
        let c = ryp_a.dot(&cme.r_factor().solve_vec(&ryp_a));
        if c > b * (1.0 + 1e-8) + 1e-12 {
            log::warn!("BayesIME: C = {c:e} exceeds B = {b:e}");
        }
        Ok(BayesImeModel {
            cme,
            points,
            coef,
            v_mean,
            b,
            c,
        })
    }

    /// `f` as kernel ridge regression on D2: `A = (K_ỹỹ + λ_f I)^{-1} t`.
    pub fn from_krr(cme: Arc<BayesCmeModel<F>>, krr: &KrrModel<RbfKernel>) -> Result<Self> {
        let scale = krr.kernel().signal_variance() / cme.ky().signal_variance();
        if krr.kernel().lengthscales() != cme.ky().lengthscales() {
            return Err(Error::invalid("KRR kernel must share the mediator lengthscales"));
        }
        BayesImeModel::new(cme, krr.inputs().clone(), krr.coefficients() * scale)
    }

    /// `(B, C)`: the two RKHS-norm estimates of `f`.
    pub fn norm_constants(&self) -> (f64, f64) {
        (self.b, self.c)
    }

    pub fn points(&self) -> &Points {
        &self.points
    }

    pub fn coefficients(&self) -> &DVector<f64> {
        &self.coef
    }
}

impl<F: InputFeatures> TreatmentEffect for BayesImeModel<F> {
    fn kind(&self) -> ModelKind {
        ModelKind::BayesIme
    }

    fn mean(&self, x: &[f64]) -> Result<f64> {
        Ok(self.cme.weights(x)?.dot(&self.v_mean))
    }

    fn cov(&self, x: &[f64], x2: &[f64]) -> Result<f64> {
        Ok(self.b * self.cme.prior_inner(x, x2)? - self.c * self.cme.posterior_inner(x, x2)?)
    }

    fn grid_moments(&self, grid: &Points) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let p = grid_parts(self.cme.features(), grid)?;
        Ok((p.w.transpose() * &self.v_mean, &p.f * self.b - &p.g * self.c))
    }
}

/// Which covariance sources are kept in [`BayesImpModel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Collapse {
    #[default]
    Full,
    /// Embedding frozen at its mean: only the `f` term survives.
    FrozenEmbedding,
    /// `f` frozen at its mean: only the embedding term survives.
    FrozenF,
}

/// Closed forms used for the mean and the `f`-mean coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BayesImpVariant {
    /// Moments of the landmark approximation of both GPs (self-consistent).
    #[default]
    Landmark,
    /// Mean through `K_{Yŷ}` directly and `f`-coefficients through
    /// `(K_ỹỹ + λ_f I)^{-1} t`; kept for comparison only.
    Direct,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BayesImpOptions {
    /// Landmark cap; larger sets are thinned by farthest-point selection.
    pub landmark_cap: usize,
    /// Landmark-Gram nugget relative to its mean diagonal.
    pub landmark_nugget: f64,
    pub collapse: Collapse,
    pub variant: BayesImpVariant,
}

impl Default for BayesImpOptions {
    fn default() -> Self {
        BayesImpOptions {
            landmark_cap: 300,
            landmark_nugget: 1e-6,
            collapse: Collapse::Full,
            variant: BayesImpVariant::Landmark,
        }
    }
}

/// The three covariance contributions at `(x, x')`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovTerms {
    /// Uncertainty in `f` pushed through the mean embedding.
    pub f_term: f64,
    /// Uncertainty in the embedding paired with the mean of `f`.
    pub embedding_term: f64,
    pub interaction: f64,
}

impl CovTerms {
    pub fn total(&self) -> f64 {
        self.f_term + self.embedding_term + self.interaction
    }
}

/// `f ~ GP(0, c·r)` on D2 and the Bayesian embedding, both approximated on
/// landmarks `ŷ` and combined through Gaussian inner-product moments.
#[derive(Debug)]
pub struct BayesImpModel<F> {
    cme: Arc<BayesCmeModel<F>>,
    f: Arc<GpModel<Scaled<NuclearKernel>>>,
    landmarks: Points,
    k_gram: DMatrix<f64>,
    k_factor: SpdFactor,
    /// `R_{ŷY} R^{-1} K_yy` (landmark values of the embedding mean per unit weight).
    m: DMatrix<f64>,
    r_hat: DMatrix<f64>,
    s: DMatrix<f64>,
    f_mean: DVector<f64>,
    f_cov: DMatrix<f64>,
    theta4: DVector<f64>,
    /// Vector paired with `w(x)` in the mean.
    v_mean: DVector<f64>,
    /// `Mᵀ P M` with `P = K^{-1} R̄ K^{-1}`.
    q: DMatrix<f64>,
    a2: f64,
    b2: f64,
    a3: f64,
    b3: f64,
    options: BayesImpOptions,
}

// manual impl: the features sit behind an `Arc`, so `F: Clone` is not needed
impl<F> Clone for BayesImpModel<F> {
    fn clone(&self) -> Self {
        BayesImpModel {
            cme: self.cme.clone(),
            f: self.f.clone(),
            landmarks: self.landmarks.clone(),
            k_gram: self.k_gram.clone(),
            k_factor: self.k_factor.clone(),
            m: self.m.clone(),
            r_hat: self.r_hat.clone(),
            s: self.s.clone(),
            f_mean: self.f_mean.clone(),
            f_cov: self.f_cov.clone(),
            theta4: self.theta4.clone(),
            v_mean: self.v_mean.clone(),
            q: self.q.clone(),
            a2: self.a2,
            b2: self.b2,
            a3: self.a3,
            b3: self.b3,
            options: self.options.clone(),
        }
    }
}

impl<F: InputFeatures> BayesImpModel<F> {
    pub fn new(
        cme: Arc<BayesCmeModel<F>>,
        f: Arc<GpModel<Scaled<NuclearKernel>>>,
        options: BayesImpOptions,
    ) -> Result<Self> {
        let raw = cme.mediator().concat(f.inputs())?;
        let landmarks = prepare_landmarks(&raw)?.farthest_point_subsample(options.landmark_cap);
        let ky = cme.ky();
        let k_gram = gram(ky, &landmarks)?.matrix;
        let l = landmarks.len() as f64;
        let nugget = options.landmark_nugget * k_gram.trace() / l;
        let k_factor = SpdFactor::new(&k_gram, nugget, "K_ŷŷ")?;
        if k_factor.jitter_used() > 0.0 {
            log::debug!("landmark Gram needed jitter {:e}", k_factor.jitter_used());
        }
        let r = cme.r_kernel();
        let r_hy = cross_gram(r, &landmarks, cme.mediator())?;
        let r_hat = gram(r, &landmarks)?.matrix;
        let m = &r_hy * cme.r_inv_kyy();
        let s = crate::kernel::symmetrize(&(&r_hy * cme.r_factor().solve(&r_hy.transpose())));
        let (f_mean, f_cov) = f.posterior(&landmarks)?;
        let theta4 = k_factor.solve_vec(&f_mean);
        let p = {
            let half = k_factor.solve(&f_cov);
            crate::kernel::symmetrize(&k_factor.solve(&half.transpose()))
        };
        let q = crate::kernel::symmetrize(&(m.transpose() * &p * &m));
        let (v_mean, theta_cov) = match options.variant {
            BayesImpVariant::Landmark => (m.transpose() * &theta4, theta4.clone()),
            BayesImpVariant::Direct => {
                let kyh = cross_gram(ky, cme.mediator(), &landmarks)?;
                let targets = f.targets();
                let kt = gram(ky, f.inputs())?.matrix;
                let alpha = SpdFactor::new(&kt, f.noise(), "K_ỹỹ + λ_f I")?.solve_vec(targets);
                let r_ht = cross_gram(f.kernel(), &landmarks, f.inputs())?;
                (kyh * &theta4, k_factor.solve_vec(&(r_ht * alpha)))
            }
        };
        let a2 = theta_cov.dot(&(&r_hat * &theta_cov));
        let b2 = theta_cov.dot(&(&s * &theta_cov));
        let a3 = p.component_mul(&r_hat).sum();
        let b3 = p.component_mul(&s).sum();
        Ok(BayesImpModel {
            cme,
            f,
            landmarks,
            k_gram,
            k_factor,
            m,
            r_hat,
            s,
            f_mean,
            f_cov,
            theta4,
            v_mean,
            q,
            a2,
            b2,
            a3,
            b3,
            options,
        })
    }

    pub fn landmarks(&self) -> &Points {
        &self.landmarks
    }

    pub fn landmark_jitter(&self) -> f64 {
        self.k_factor.jitter_used()
    }

    /// `K_ŷŷ^{-1} m_f(ŷ)`: landmark coefficients of the mean of `f`.
    pub fn theta4(&self) -> &DVector<f64> {
        &self.theta4
    }

    pub fn options(&self) -> &BayesImpOptions {
        &self.options
    }

    pub fn f_model(&self) -> &GpModel<Scaled<NuclearKernel>> {
        &self.f
    }

    /// Same model with a different collapse mode.
    pub fn with_collapse(&self, collapse: Collapse) -> Self {
        let mut out = self.clone();
        out.options.collapse = collapse;
        out
    }

    pub fn terms(&self, x: &[f64], x2: &[f64]) -> Result<CovTerms> {
        let w1 = self.cme.weights(x)?;
        let w2 = self.cme.weights(x2)?;
        let f = self.cme.prior_inner(x, x2)?;
        let g = w1.dot(&self.cme.features().phi(x2)?);
        Ok(self.mask(CovTerms {
            f_term: w1.dot(&(&self.q * w2)),
            embedding_term: self.a2 * f - self.b2 * g,
            interaction: self.a3 * f - self.b3 * g,
        }))
    }

    fn mask(&self, t: CovTerms) -> CovTerms {
        match self.options.collapse {
            Collapse::Full => t,
            Collapse::FrozenEmbedding => CovTerms {
                embedding_term: 0.0,
                interaction: 0.0,
                ..t
            },
            Collapse::FrozenF => CovTerms {
                f_term: 0.0,
                interaction: 0.0,
                ..t
            },
        }
    }

    /// Landmark approximations of `f` and of the embedding at `x`.
    pub fn finite_parts(&self, x: &[f64]) -> Result<(FiniteGp, FiniteGp)> {
        let f = FiniteGp::with_factor(
            self.landmarks.clone(),
            self.k_gram.clone(),
            self.k_factor.clone(),
            self.f_mean.clone(),
            self.frozen_f_cov(),
        )?;
        let mu = FiniteGp::with_factor(
            self.landmarks.clone(),
            self.k_gram.clone(),
            self.k_factor.clone(),
            &self.m * self.cme.weights(x)?,
            self.embedding_cov(x, x)?,
        )?;
        Ok((f, mu))
    }

    fn frozen_f_cov(&self) -> DMatrix<f64> {
        match self.options.collapse {
            Collapse::FrozenF => DMatrix::zeros(self.landmarks.len(), self.landmarks.len()),
            _ => self.f_cov.clone(),
        }
    }

    /// Embedding covariance at the landmarks between `x` and `x'`.
    fn embedding_cov(&self, x: &[f64], x2: &[f64]) -> Result<DMatrix<f64>> {
        if self.options.collapse == Collapse::FrozenEmbedding {
            return Ok(DMatrix::zeros(self.landmarks.len(), self.landmarks.len()));
        }
        let f = self.cme.prior_inner(x, x2)?;
        let g = self.cme.posterior_inner(x, x2)?;
        Ok(&self.r_hat * f - &self.s * g)
    }

    /// `κ(x, x')` through whitened landmark coefficients and the generic
    /// inner-product covariance; an independent route to [`TreatmentEffect::cov`].
    pub fn cov_via_landmarks(&self, x: &[f64], x2: &[f64]) -> Result<f64> {
        let (f, mu1) = self.finite_parts(x)?;
        let (_, mu2) = self.finite_parts(x2)?;
        let (uf, sf) = f.whitened();
        let cross = self.embedding_cov(x, x2)?;
        let half = self.k_factor.solve_lower(&cross);
        let s12 = self.k_factor.solve_lower(&half.transpose()).transpose();
        inner_product_cov(uf, sf, mu1.whitened().0, mu2.whitened().0, &s12)
    }
}

impl<F: InputFeatures> TreatmentEffect for BayesImpModel<F> {
    fn kind(&self) -> ModelKind {
        ModelKind::BayesImp
    }

    fn mean(&self, x: &[f64]) -> Result<f64> {
        Ok(self.cme.weights(x)?.dot(&self.v_mean))
    }

    fn cov(&self, x: &[f64], x2: &[f64]) -> Result<f64> {
        Ok(self.terms(x, x2)?.total())
    }

    fn grid_moments(&self, grid: &Points) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let p = grid_parts(self.cme.features(), grid)?;
        let mean = p.w.transpose() * &self.v_mean;
        let (qf, a, b) = match self.options.collapse {
            Collapse::Full => (1.0, self.a2 + self.a3, self.b2 + self.b3),
            Collapse::FrozenEmbedding => (1.0, 0.0, 0.0),
            Collapse::FrozenF => (0.0, self.a2, self.b2),
        };
        let mut cov = &p.f * a - &p.g * b;
        if qf != 0.0 {
            cov += p.w.transpose() * &self.q * &p.w;
        }
        Ok((mean, crate::kernel::symmetrize(&cov)))
    }
}
