//! Conditional and interventional mean embeddings.
//!
//! Both the plain conditional embedding and the adjusted (backdoor/front-door)
//! interventional embedding are expressed through [`InputFeatures`]: an
//! `N × N` Gram `K`, a ridge `λ`, a feature vector `φ(x) ∈ R^N` so that the
//! embedding weights are `w(x) = (K + λI)^{-1} φ(x)`, and the RKHS inner
//! product of two input features (used by the Bayesian covariance terms).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernel::{check_dim, gram, kernel_column, Kernel, RbfKernel, SpdFactor};
use crate::points::{Dataset, Points};

pub trait InputFeatures: Send + Sync {
    /// Number of training rows `N`.
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Dimension of the treatment/query input.
    fn input_dim(&self) -> usize;

    /// `K` (either `K_xx` or `K_Ω`).
    fn gram(&self) -> &DMatrix<f64>;

    fn ridge(&self) -> f64;

    /// Factorisation of `K + λI`.
    fn factor(&self) -> &SpdFactor;

    /// `φ(x) ∈ R^N`.
    fn phi(&self, x: &[f64]) -> Result<DVector<f64>>;

    /// RKHS inner product of the two input features at `x` and `x'`.
    fn prior_inner(&self, x: &[f64], x2: &[f64]) -> Result<f64>;

    /// `(K + λI)^{-1} φ(x)`.
    fn weights(&self, x: &[f64]) -> Result<DVector<f64>> {
        Ok(self.factor().solve_vec(&self.phi(x)?))
    }

    /// Columns `φ(x_g)` for every grid point (`N × G`).
    fn phi_matrix(&self, grid: &Points) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(self.len(), grid.len());
        for (g, x) in grid.rows().enumerate() {
            out.set_column(g, &self.phi(x)?);
        }
        Ok(out)
    }

    /// `[F(x_g, x_h)]` over a grid.
    fn prior_inner_matrix(&self, grid: &Points) -> Result<DMatrix<f64>> {
        let g = grid.len();
        let mut out = DMatrix::zeros(g, g);
        for i in 0..g {
            for j in 0..=i {
                let v = self.prior_inner(grid.row(i), grid.row(j))?;
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        Ok(out)
    }

    /// Names of the tunable kernel lengthscales (log-space in optimisers).
    fn hyper_names(&self) -> Vec<String>;

    fn hyper_values(&self) -> Vec<f64>;

    /// `∂K/∂ log θ` for each tunable lengthscale, in `hyper_names` order.
    fn gram_derivs(&self) -> Vec<DMatrix<f64>>;

    /// Same features with new lengthscales and ridge.
    fn rebuild(&self, values: &[f64], ridge: f64) -> Result<Self>
    where
        Self: Sized;
}

/// Plain conditional-embedding features: `φ(x) = k_x(X, x)`, `K = K_xx`.
#[derive(Debug, Clone)]
pub struct PlainFeatures {
    kernel: RbfKernel,
    x: Points,
    gram: DMatrix<f64>,
    ridge: f64,
    factor: SpdFactor,
}

impl PlainFeatures {
    pub fn new(x: &Points, kernel: RbfKernel, ridge: f64) -> Result<Self> {
        check_ridge(ridge)?;
        let gram = gram(&kernel, x)?.matrix;
        let factor = SpdFactor::new(&gram, ridge, "K_xx + λI")?;
        Ok(PlainFeatures {
            kernel,
            x: x.clone(),
            gram,
            ridge,
            factor,
        })
    }

    pub fn kernel(&self) -> &RbfKernel {
        &self.kernel
    }

    pub fn inputs(&self) -> &Points {
        &self.x
    }
}

impl InputFeatures for PlainFeatures {
    fn len(&self) -> usize {
        self.x.len()
    }
    fn input_dim(&self) -> usize {
        self.x.dim()
    }
    fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }
    fn ridge(&self) -> f64 {
        self.ridge
    }
    fn factor(&self) -> &SpdFactor {
        &self.factor
    }
    fn phi(&self, x: &[f64]) -> Result<DVector<f64>> {
        check_dim(self.x.dim(), x.len())?;
        Ok(kernel_column(&self.kernel, &self.x, x))
    }
    fn prior_inner(&self, x: &[f64], x2: &[f64]) -> Result<f64> {
        check_dim(self.x.dim(), x.len())?;
        check_dim(self.x.dim(), x2.len())?;
        Ok(self.kernel.eval(x, x2))
    }
    fn phi_matrix(&self, grid: &Points) -> Result<DMatrix<f64>> {
        check_dim(self.x.dim(), grid.dim())?;
        if grid.is_empty() {
            return Ok(DMatrix::zeros(self.len(), 0));
        }
        crate::kernel::cross_gram(&self.kernel, &self.x, grid)
    }

    fn prior_inner_matrix(&self, grid: &Points) -> Result<DMatrix<f64>> {
        check_dim(self.x.dim(), grid.dim())?;
        if grid.is_empty() {
            return Ok(DMatrix::zeros(0, 0));
        }
        Ok(gram(&self.kernel, grid)?.matrix)
    }

    fn hyper_names(&self) -> Vec<String> {
        (0..self.kernel.input_dim()).map(|d| format!("lengthscale_x{d}")).collect()
    }
    fn hyper_values(&self) -> Vec<f64> {
        self.kernel.lengthscales().to_vec()
    }
    fn gram_derivs(&self) -> Vec<DMatrix<f64>> {
        self.kernel.gram_log_lengthscale_derivs(&self.x)
    }
    fn rebuild(&self, values: &[f64], ridge: f64) -> Result<Self> {
        PlainFeatures::new(&self.x, self.kernel.with_lengthscales(values.to_vec())?, ridge)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdjustmentKind {
    Backdoor,
    Frontdoor,
}

/// Which columns of `D1` play treatment `X`, adjustment `Z` and mediator `Y`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjustmentSpec {
    pub kind: AdjustmentKind,
    pub treatment: Vec<String>,
    pub adjustment: Vec<String>,
    pub mediator: Vec<String>,
    /// Ridge of the inner `Z | X` embedding (front-door only); `None` reuses `λ`.
    pub inner_ridge: Option<f64>,
}

impl AdjustmentSpec {
    pub fn backdoor(treatment: &str, adjustment: &[&str], mediator: &str) -> Self {
        AdjustmentSpec {
            kind: AdjustmentKind::Backdoor,
            treatment: vec![treatment.to_string()],
            adjustment: adjustment.iter().map(|s| s.to_string()).collect(),
            mediator: vec![mediator.to_string()],
            inner_ridge: None,
        }
    }

    pub fn frontdoor(treatment: &str, adjustment: &[&str], mediator: &str) -> Self {
        AdjustmentSpec {
            kind: AdjustmentKind::Frontdoor,
            ..AdjustmentSpec::backdoor(treatment, adjustment, mediator)
        }
    }

    pub fn validate(&self, data: &Dataset) -> Result<()> {
        if self.treatment.is_empty() {
            return Err(Error::invalid("adjustment spec needs a treatment column"));
        }
        if self.mediator.is_empty() {
            return Err(Error::invalid("adjustment spec needs a mediator column"));
        }
        if self.kind == AdjustmentKind::Frontdoor && self.adjustment.is_empty() {
            return Err(Error::invalid("front-door adjustment needs at least one adjustment column"));
        }
        let all: Vec<&String> = self
            .treatment
            .iter()
            .chain(&self.adjustment)
            .chain(&self.mediator)
            .collect();
        for (i, c) in all.iter().enumerate() {
            if !data.has(c) {
                return Err(Error::MissingColumn(c.to_string()));
            }
            if all[..i].contains(c) {
                return Err(Error::invalid(format!("column `{c}` used twice in adjustment spec")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum OmegaParts {
    Backdoor {
        /// `(1/N) Σ_j k_Z(z_i, z_j)`.
        mean_z: DVector<f64>,
        /// `‖μ̂_Z‖² = mean(K_ZZ)`.
        mean_kzz: f64,
    },
    Frontdoor {
        /// `(1/N) Σ_j k_X(x_i, x_j)`.
        mean_x: DVector<f64>,
        mean_kxx: f64,
        kzz: DMatrix<f64>,
        inner: SpdFactor,
        inner_ridge: f64,
    },
}

/// Interventional features `Φ_Ω(x)` with `K_Ω = K_XX ⊙ K_ZZ`.
#[derive(Debug, Clone)]
pub struct OmegaFeatures {
    kind: AdjustmentKind,
    kx: RbfKernel,
    kz: Option<RbfKernel>,
    x: Points,
    z: Option<Points>,
    kxx: DMatrix<f64>,
    kzz: DMatrix<f64>,
    gram: DMatrix<f64>,
    ridge: f64,
    factor: SpdFactor,
    parts: OmegaParts,
    inner_ridge: Option<f64>,
}

/// Builds Ω features from `D1`. An empty adjustment list (backdoor only)
/// means a constant `k_Z ≡ 1`, which reduces to the plain conditional embedding.
pub fn build_omega(
    data: &Dataset,
    spec: &AdjustmentSpec,
    kx: &RbfKernel,
    kz: Option<&RbfKernel>,
    ridge: f64,
) -> Result<OmegaFeatures> {
    spec.validate(data)?;
    let x = data.points(&spec.treatment)?;
    let z = if spec.adjustment.is_empty() {
        None
    } else {
        Some(data.points(&spec.adjustment)?)
    };
    OmegaFeatures::from_points(spec.kind, &x, z.as_ref(), kx, kz, ridge, spec.inner_ridge)
}

impl OmegaFeatures {
    pub fn from_points(
        kind: AdjustmentKind,
        x: &Points,
        z: Option<&Points>,
        kx: &RbfKernel,
        kz: Option<&RbfKernel>,
        ridge: f64,
        inner_ridge: Option<f64>,
    ) -> Result<Self> {
        check_ridge(ridge)?;
        if x.is_empty() {
            return Err(Error::EmptyInput("treatment samples"));
        }
        let n = x.len();
        let kxx = gram(kx, x)?.matrix;
        let kz = match (z, kz) {
            (Some(_), Some(k)) => Some(k.clone()),
            (Some(_), None) => return Err(Error::invalid("adjustment columns given without a kernel")),
            (None, _) => None,
        };
        let kzz = match (z, &kz) {
            (Some(zp), Some(k)) => {
                if zp.len() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        got: zp.len(),
                    });
                }
                gram(k, zp)?.matrix
            }
            _ => DMatrix::from_element(n, n, 1.0),
        };
        let gram = kxx.component_mul(&kzz);
        let factor = SpdFactor::new(&gram, ridge, "K_Ω + λI")?;
        let parts = match kind {
            AdjustmentKind::Backdoor => {
                let mean_z = DVector::from_fn(n, |i, _| kzz.row(i).sum() / n as f64);
                OmegaParts::Backdoor {
                    mean_kzz: mean_z.sum() / n as f64,
                    mean_z,
                }
            }
            AdjustmentKind::Frontdoor => {
                if z.is_none() {
                    return Err(Error::invalid("front-door adjustment needs adjustment columns"));
                }
                let lz = inner_ridge.unwrap_or(ridge);
                check_ridge(lz)?;
                let mean_x = DVector::from_fn(n, |i, _| kxx.row(i).sum() / n as f64);
                OmegaParts::Frontdoor {
                    mean_kxx: mean_x.sum() / n as f64,
                    mean_x,
                    kzz: kzz.clone(),
                    inner: SpdFactor::new(&kxx, lz, "K_XX + λ_z I")?,
                    inner_ridge: lz,
                }
            }
        };
        Ok(OmegaFeatures {
            kind,
            kx: kx.clone(),
            kz,
            x: x.clone(),
            z: z.cloned(),
            kxx,
            kzz,
            gram,
            ridge,
            factor,
            parts,
            inner_ridge,
        })
    }

    pub fn kind(&self) -> AdjustmentKind {
        self.kind
    }

    pub fn treatment_kernel(&self) -> &RbfKernel {
        &self.kx
    }

    pub fn adjustment_kernel(&self) -> Option<&RbfKernel> {
        self.kz.as_ref()
    }

    pub fn treatment_points(&self) -> &Points {
        &self.x
    }

    /// `β(x) = (K_XX + λ_z I)^{-1} k_X(X, x)` (front-door only).
    fn inner_weights(&self, x: &[f64]) -> Option<DVector<f64>> {
        match &self.parts {
            OmegaParts::Frontdoor { inner, .. } => Some(inner.solve_vec(&kernel_column(&self.kx, &self.x, x))),
            OmegaParts::Backdoor { .. } => None,
        }
    }

    pub fn inner_ridge(&self) -> Option<f64> {
        match &self.parts {
            OmegaParts::Frontdoor { inner_ridge, .. } => Some(*inner_ridge),
            OmegaParts::Backdoor { .. } => None,
        }
    }
}

impl InputFeatures for OmegaFeatures {
    fn len(&self) -> usize {
        self.x.len()
    }
    fn input_dim(&self) -> usize {
        self.x.dim()
    }
    fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }
    fn ridge(&self) -> f64 {
        self.ridge
    }
    fn factor(&self) -> &SpdFactor {
        &self.factor
    }

    fn phi(&self, x: &[f64]) -> Result<DVector<f64>> {
        check_dim(self.x.dim(), x.len())?;
        match &self.parts {
            OmegaParts::Backdoor { mean_z, .. } => {
                Ok(kernel_column(&self.kx, &self.x, x).component_mul(mean_z))
            }
            OmegaParts::Frontdoor { mean_x, kzz, .. } => {
                let beta = self.inner_weights(x).expect("front-door parts");
                Ok(mean_x.component_mul(&(kzz * beta)))
            }
        }
    }

    fn prior_inner(&self, x: &[f64], x2: &[f64]) -> Result<f64> {
        check_dim(self.x.dim(), x.len())?;
        check_dim(self.x.dim(), x2.len())?;
        match &self.parts {
            OmegaParts::Backdoor { mean_kzz, .. } => Ok(self.kx.eval(x, x2) * mean_kzz),
            OmegaParts::Frontdoor { mean_kxx, kzz, .. } => {
                let b1 = self.inner_weights(x).expect("front-door parts");
                let b2 = self.inner_weights(x2).expect("front-door parts");
                Ok(mean_kxx * b1.dot(&(kzz * b2)))
            }
        }
    }

    fn phi_matrix(&self, grid: &Points) -> Result<DMatrix<f64>> {
        check_dim(self.x.dim(), grid.dim())?;
        if grid.is_empty() {
            return Ok(DMatrix::zeros(self.len(), 0));
        }
        let kxg = crate::kernel::cross_gram(&self.kx, &self.x, grid)?;
        match &self.parts {
            OmegaParts::Backdoor { mean_z, .. } => {
                let mut out = kxg;
                for mut col in out.column_iter_mut() {
                    col.component_mul_assign(mean_z);
                }
                Ok(out)
            }
            OmegaParts::Frontdoor { mean_x, kzz, inner, .. } => {
                let mut out = kzz * inner.solve(&kxg);
                for mut col in out.column_iter_mut() {
                    col.component_mul_assign(mean_x);
                }
                Ok(out)
            }
        }
    }

    fn prior_inner_matrix(&self, grid: &Points) -> Result<DMatrix<f64>> {
        check_dim(self.x.dim(), grid.dim())?;
        if grid.is_empty() {
            return Ok(DMatrix::zeros(0, 0));
        }
        match &self.parts {
            OmegaParts::Backdoor { mean_kzz, .. } => Ok(gram(&self.kx, grid)?.matrix * *mean_kzz),
            OmegaParts::Frontdoor { mean_kxx, kzz, inner, .. } => {
                let beta = inner.solve(&crate::kernel::cross_gram(&self.kx, &self.x, grid)?);
                Ok(beta.transpose() * kzz * &beta * *mean_kxx)
            }
        }
    }

    fn hyper_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (0..self.kx.input_dim()).map(|d| format!("lengthscale_x{d}")).collect();
        if let Some(kz) = &self.kz {
            names.extend((0..kz.input_dim()).map(|d| format!("lengthscale_z{d}")));
        }
        names
    }

    fn hyper_values(&self) -> Vec<f64> {
        let mut v = self.kx.lengthscales().to_vec();
        if let Some(kz) = &self.kz {
            v.extend_from_slice(kz.lengthscales());
        }
        v
    }

    fn gram_derivs(&self) -> Vec<DMatrix<f64>> {
        let mut out: Vec<DMatrix<f64>> = self
            .kx
            .gram_log_lengthscale_derivs(&self.x)
            .into_iter()
            .map(|d| d.component_mul(&self.kzz))
            .collect();
        if let (Some(kz), Some(z)) = (&self.kz, &self.z) {
            out.extend(
                kz.gram_log_lengthscale_derivs(z)
                    .into_iter()
                    .map(|d| d.component_mul(&self.kxx)),
            );
        }
        out
    }

    fn rebuild(&self, values: &[f64], ridge: f64) -> Result<Self> {
        let dx = self.kx.input_dim();
        if values.len() != self.hyper_values().len() {
            return Err(Error::DimensionMismatch {
                expected: self.hyper_values().len(),
                got: values.len(),
            });
        }
        let kx = self.kx.with_lengthscales(values[..dx].to_vec())?;
        let kz = match &self.kz {
            Some(k) => Some(k.with_lengthscales(values[dx..].to_vec())?),
            None => None,
        };
        OmegaFeatures::from_points(
            self.kind,
            &self.x,
            self.z.as_ref(),
            &kx,
            kz.as_ref(),
            ridge,
            self.inner_ridge,
        )
    }
}

fn check_ridge(ridge: f64) -> Result<()> {
    if !(ridge > 0.0 && ridge.is_finite()) {
        return Err(Error::invalid(format!("ridge must be positive, got {ridge}")));
    }
    Ok(())
}

/// `(K_xx + λI)^{-1} k_x(X, x_q)`.
pub fn cme_weights(x: &Points, kernel: &RbfKernel, ridge: f64, x_query: &[f64]) -> Result<DVector<f64>> {
    PlainFeatures::new(x, kernel.clone(), ridge)?.weights(x_query)
}

/// Embedding evaluated at mediator points: `k_y(y_q, Y) (K + λI)^{-1} φ(x)`.
pub fn ime_evaluate<F: InputFeatures, K: Kernel>(
    features: &F,
    mediator: &Points,
    ky: &K,
    x: &[f64],
    y_query: &Points,
) -> Result<DVector<f64>> {
    if mediator.len() != features.len() {
        return Err(Error::DimensionMismatch {
            expected: features.len(),
            got: mediator.len(),
        });
    }
    if y_query.is_empty() {
        return Ok(DVector::zeros(0));
    }
    let w = features.weights(x)?;
    let kq = crate::kernel::cross_gram(ky, y_query, mediator)?;
    Ok(kq * w)
}

/// `Σ_i w_i(x) f(y_i)`: the embedding paired with a function known at the mediator samples.
pub fn embedding_expectation<F: InputFeatures>(features: &F, f_at_mediator: &DVector<f64>, x: &[f64]) -> Result<f64> {
    Ok(features.weights(x)?.dot(f_at_mediator))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn toy() -> Dataset {
        Dataset::new(
            vec!["x".into(), "z".into(), "y".into()],
            vec![
                vec![0.1, -0.5, 1.2, 0.8, -1.1],
                vec![1.0, 0.3, -0.2, 0.9, 0.0],
                vec![0.5, -0.4, 1.0, 0.2, -0.9],
            ],
        )
        .unwrap()
    }

    fn k(l: f64) -> RbfKernel {
        RbfKernel::isotropic(1, l, 1.0).unwrap()
    }

    #[test]
    fn constant_adjustment_is_plain_cme() {
        let d = toy();
        let spec = AdjustmentSpec::backdoor("x", &[], "y");
        let om = build_omega(&d, &spec, &k(0.7), None, 0.1).unwrap();
        let plain = PlainFeatures::new(&d.points(&["x".into()]).unwrap(), k(0.7), 0.1).unwrap();
        let y = d.points(&["y".into()]).unwrap();
        let q = Points::from_scalars(&[-0.3, 0.4, 1.7]);
        let a = ime_evaluate(&om, &y, &k(1.0), &[0.25], &q).unwrap();
        let b = ime_evaluate(&plain, &y, &k(1.0), &[0.25], &q).unwrap();
        for i in 0..3 {
            assert!((a[i] - b[i]).abs() < 1e-10);
        }
        assert_eq!(om.gram(), plain.gram());
        assert_relative_eq!(om.prior_inner(&[0.1], &[0.9]).unwrap(), k(0.7).eval(&[0.1], &[0.9]), epsilon = 1e-15);
    }

    #[test]
    fn backdoor_phi_is_hadamard() {
        let d = Dataset::new(
            vec!["x".into(), "z".into(), "y".into()],
            vec![vec![0.0, 1.0], vec![0.0, 2.0], vec![0.0, 0.0]],
        )
        .unwrap();
        let om = build_omega(&d, &AdjustmentSpec::backdoor("x", &["z"], "y"), &k(1.0), Some(&k(1.0)), 0.1).unwrap();
        let phi = om.phi(&[0.5]).unwrap();
        let kz01 = (-2.0f64).exp();
        let a = [(-0.125f64).exp(), (-0.125f64).exp()];
        let b = [(1.0 + kz01) / 2.0, (kz01 + 1.0) / 2.0];
        assert_relative_eq!(phi[0], a[0] * b[0], epsilon = 1e-15);
        assert_relative_eq!(phi[1], a[1] * b[1], epsilon = 1e-15);
    }

    #[test]
    fn single_row_scalar_formula() {
        let x = Points::from_scalars(&[0.3]);
        let f = PlainFeatures::new(&x, k(1.0), 0.5).unwrap();
        let y = Points::from_scalars(&[1.0]);
        let v = ime_evaluate(&f, &y, &k(1.0), &[0.0], &Points::from_scalars(&[0.2])).unwrap();
        let phi = k(1.0).eval(&[0.3], &[0.0]);
        assert_relative_eq!(v[0], k(1.0).eval(&[0.2], &[1.0]) * phi / 1.5, epsilon = 1e-15);
        let e = ime_evaluate(&f, &y, &k(1.0), &[0.0], &Points::empty(1)).unwrap();
        assert_eq!(e.len(), 0);
    }

    #[test]
    fn cme_weight_examples() {
        let x = Points::from_scalars(&[0.0, 2.0, 5.0]);
        let w = cme_weights(&x, &k(1.0), 1e-10, &[2.0]).unwrap();
        assert!((w[1] - 1.0).abs() < 1e-6 && w[0].abs() < 1e-6 && w[2].abs() < 1e-6);
        let w = cme_weights(&Points::from_scalars(&[1.0]), &k(1.0), 0.2, &[0.0]).unwrap();
        assert_relative_eq!(w[0], (-0.5f64).exp() / 1.2, epsilon = 1e-15);
    }

    #[test]
    fn frontdoor_prior_inner_matches_phi_structure() {
        let d = toy();
        let om = build_omega(&d, &AdjustmentSpec::frontdoor("x", &["z"], "y"), &k(0.9), Some(&k(0.6)), 0.05).unwrap();
        // symmetric and PSD on a small grid
        let xs = [-1.0, -0.2, 0.4, 1.3];
        let g = DMatrix::from_fn(4, 4, |i, j| om.prior_inner(&[xs[i]], &[xs[j]]).unwrap());
        assert!(crate::kernel::is_psd_within(&g, 1e-10));
        assert_relative_eq!(g[(0, 2)], g[(2, 0)], epsilon = 1e-14);
    }

    #[test]
    fn spec_validation() {
        let d = toy();
        assert!(matches!(
            build_omega(&d, &AdjustmentSpec::backdoor("x", &["w"], "y"), &k(1.0), Some(&k(1.0)), 0.1),
            Err(Error::MissingColumn(_))
        ));
        assert!(build_omega(&d, &AdjustmentSpec::backdoor("x", &["x"], "y"), &k(1.0), Some(&k(1.0)), 0.1).is_err());
        assert!(build_omega(&d, &AdjustmentSpec::frontdoor("x", &[], "y"), &k(1.0), None, 0.1).is_err());
    }

    #[test]
    fn omega_gram_derivatives_match_differences() {
        let d = toy();
        let om = build_omega(&d, &AdjustmentSpec::backdoor("x", &["z"], "y"), &k(0.8), Some(&k(1.3)), 0.1).unwrap();
        let derivs = om.gram_derivs();
        let h = 1e-6;
        for (p, dk) in derivs.iter().enumerate() {
            let mut up = om.hyper_values();
            let mut dn = up.clone();
            up[p] *= f64::exp(h);
            dn[p] *= f64::exp(-h);
            let fd = (om.rebuild(&up, 0.1).unwrap().gram() - om.rebuild(&dn, 0.1).unwrap().gram()) / (2.0 * h);
            assert!((fd - dk).amax() < 1e-7);
        }
    }

    #[test]
    fn matrix_forms_match_pointwise() {
        let d = toy();
        let grid = Points::from_scalars(&[-1.2, 0.0, 0.35, 2.0]);
        for spec in [AdjustmentSpec::backdoor("x", &["z"], "y"), AdjustmentSpec::frontdoor("x", &["z"], "y")] {
            let om = build_omega(&d, &spec, &k(0.9), Some(&k(0.6)), 0.05).unwrap();
            let pm = om.phi_matrix(&grid).unwrap();
            let fm = om.prior_inner_matrix(&grid).unwrap();
            for g in 0..grid.len() {
                assert!((pm.column(g) - om.phi(grid.row(g)).unwrap()).amax() < 1e-12);
                for h in 0..grid.len() {
                    assert!((fm[(g, h)] - om.prior_inner(grid.row(g), grid.row(h)).unwrap()).abs() < 1e-12);
                }
            }
        }
    }
}
