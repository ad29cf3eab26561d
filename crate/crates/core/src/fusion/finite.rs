//! Landmark-based finite-dimensional GP approximations.
//!
//! A GP `g` with mean `m` and covariance `𝒦` is replaced by
//! `g̃ = Σ_j a_j k(·, ξ_j)` with `a ~ N(K_ξξ^{-1} m(ξ), K_ξξ^{-1} 𝒦_ξξ K_ξξ^{-1})`,
//! so `g̃(ξ)` has exactly the law of `g(ξ)`. RKHS inner products of two such
//! expansions are `aᵀ K_ξξ b = uᵀ v` with `u = Lᵀ a`, `K_ξξ = L Lᵀ`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fusion::moments::{inner_product_moments, GaussianMoments};
use crate::gp::GpModel;
use crate::kernel::{check_dim, cross_gram, gram, Kernel, SpdFactor};
use crate::points::Points;

/// Landmarks closer than this are merged.
pub const LANDMARK_DEDUP_TOL: f64 = 1e-9;

/// Anything that can report a GP's mean and covariance at a point set.
pub trait GpSource {
    fn mean_cov(&self, points: &Points) -> Result<(DVector<f64>, DMatrix<f64>)>;
}

impl<K: Kernel> GpSource for GpModel<K> {
    fn mean_cov(&self, points: &Points) -> Result<(DVector<f64>, DMatrix<f64>)> {
        self.posterior(points)
    }
}

/// A GP given directly by its mean vector and covariance at fixed points.
#[derive(Debug, Clone)]
pub struct FixedMoments {
    pub points: Points,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GpSource for FixedMoments {
    fn mean_cov(&self, points: &Points) -> Result<(DVector<f64>, DMatrix<f64>)> {
        if points != &self.points {
            return Err(Error::invalid("fixed moments queried at foreign points"));
        }
        Ok((self.mean.clone(), self.cov.clone()))
    }
}

#[derive(Debug, Clone)]
pub struct FiniteGp {
    landmarks: Points,
    gram: DMatrix<f64>,
    factor: SpdFactor,
    coef_mean: DVector<f64>,
    coef_cov: DMatrix<f64>,
    /// `L^{-1} m(ξ)` and `L^{-1} 𝒦 L^{-ᵀ}`.
    u_mean: DVector<f64>,
    u_cov: DMatrix<f64>,
}

/// Deduplicates landmarks; errors on an empty set or when every landmark collapses to one.
pub fn prepare_landmarks(raw: &Points) -> Result<Points> {
    if raw.is_empty() {
        return Err(Error::EmptyInput("landmarks"));
    }
    let d = raw.dedup(LANDMARK_DEDUP_TOL);
    if raw.len() > 1 && d.len() == 1 {
        return Err(Error::invalid("all landmarks are duplicates"));
    }
    Ok(d)
}

/// Finite approximation of `source` on landmarks `xi` with basis kernel `kernel`;
/// `nugget` is added to the landmark Gram diagonal.
pub fn finite_approx<S: GpSource + ?Sized, K: Kernel + ?Sized>(
    source: &S,
    xi: &Points,
    kernel: &K,
    nugget: f64,
) -> Result<FiniteGp> {
    let xi = prepare_landmarks(xi)?;
    let (m, c) = source.mean_cov(&xi)?;
    FiniteGp::from_moments(xi, kernel, nugget, m, c)
}

impl FiniteGp {
    /// Builds from moments already evaluated at (deduplicated) landmarks.
    pub fn from_moments<K: Kernel + ?Sized>(
        landmarks: Points,
        kernel: &K,
        nugget: f64,
        mean: DVector<f64>,
        cov: DMatrix<f64>,
    ) -> Result<Self> {
        let g = gram(kernel, &landmarks)?.matrix;
        let factor = SpdFactor::new(&g, nugget, "K_ξξ")?;
        FiniteGp::with_factor(landmarks, g, factor, mean, cov)
    }

    pub(crate) fn with_factor(
        landmarks: Points,
        gram: DMatrix<f64>,
        factor: SpdFactor,
        mean: DVector<f64>,
        cov: DMatrix<f64>,
    ) -> Result<Self> {
        let n = landmarks.len();
        if mean.len() != n || cov.nrows() != n || cov.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: mean.len(),
            });
        }
        let coef_mean = factor.solve_vec(&mean);
        let kinv_c = factor.solve(&cov);
        let coef_cov = factor.solve(&kinv_c.transpose());
        let u_mean = factor.solve_lower(&DMatrix::from_column_slice(n, 1, mean.as_slice())).column(0).into_owned();
        let half = factor.solve_lower(&cov);
        let u_cov = factor.solve_lower(&half.transpose());
        Ok(FiniteGp {
            landmarks,
            gram,
            factor,
            coef_mean,
            coef_cov,
            u_mean,
            u_cov,
        })
    }

    pub fn landmarks(&self) -> &Points {
        &self.landmarks
    }

    /// Landmark Gram without the nugget.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// Total diagonal shift applied to the landmark Gram (nugget plus jitter).
    pub fn gram_shift(&self) -> f64 {
        self.factor.shift()
    }

    pub fn jitter_used(&self) -> f64 {
        self.factor.jitter_used()
    }

    pub fn coef_mean(&self) -> &DVector<f64> {
        &self.coef_mean
    }

    pub fn coef_cov(&self) -> &DMatrix<f64> {
        &self.coef_cov
    }

    /// Whitened coefficients `u = Lᵀ a`: mean and covariance.
    pub fn whitened(&self) -> (&DVector<f64>, &DMatrix<f64>) {
        (&self.u_mean, &self.u_cov)
    }

    /// Mean and covariance of `g̃` at `points` under basis kernel `kernel`.
    pub fn eval<K: Kernel + ?Sized>(&self, kernel: &K, points: &Points) -> Result<(DVector<f64>, DMatrix<f64>)> {
        check_dim(self.landmarks.dim(), points.dim())?;
        let kq = cross_gram(kernel, points, &self.landmarks)?;
        let mean = &kq * &self.coef_mean;
        let cov = &kq * &self.coef_cov * kq.transpose();
        Ok((mean, cov))
    }

    /// Evaluation at the landmarks through the shifted Gram, reproducing the
    /// source moments up to solve accuracy.
    pub fn eval_at_landmarks(&self) -> (DVector<f64>, DMatrix<f64>) {
        let mut k = self.gram.clone();
        for i in 0..k.nrows() {
            k[(i, i)] += self.factor.shift();
        }
        (&k * &self.coef_mean, &k * &self.coef_cov * &k)
    }

    /// Moments of the RKHS inner product with an independent expansion on the same landmarks.
    pub fn inner_product(&self, other: &FiniteGp) -> Result<GaussianMoments> {
        if self.landmarks != other.landmarks {
            return Err(Error::invalid("finite GPs live on different landmarks"));
        }
        inner_product_moments(&self.u_mean, &self.u_cov, &other.u_mean, &other.u_cov)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::gp_fit;
    use crate::kernel::RbfKernel;

    #[test]
    fn single_landmark() {
        let k = RbfKernel::isotropic(1, 1.0, 2.0).unwrap();
        let src = FixedMoments {
            points: Points::from_scalars(&[0.5]),
            mean: DVector::from_element(1, 3.0),
            cov: DMatrix::from_element(1, 1, 1.0),
        };
        let f = finite_approx(&src, &Points::from_scalars(&[0.5]), &k, 0.0).unwrap();
        assert!((f.coef_mean()[0] - 1.5).abs() < 1e-15);
    }

    #[test]
    fn reproduces_source_at_landmarks() {
        let k = RbfKernel::isotropic(1, 1.0, 1.0).unwrap();
        let gp = gp_fit(&Points::from_scalars(&[-1.0, 0.0, 2.0]), &[0.3, -0.2, 1.0], k.clone(), 0.1).unwrap();
        let xi = Points::from_scalars(&[-2.0, -1.0, 0.5, 2.0, 3.0]);
        let f = finite_approx(&gp, &xi, &k, 0.0).unwrap();
        let (m, c) = gp.posterior(&xi).unwrap();
        let (fm, fc) = f.eval_at_landmarks();
        assert!((m - fm).amax() < 1e-8);
        assert!((c - fc).amax() < 1e-8);
    }

    #[test]
    fn duplicate_landmarks() {
        assert!(prepare_landmarks(&Points::from_scalars(&[1.0, 1.0, 1.0])).is_err());
        assert!(prepare_landmarks(&Points::empty(1)).is_err());
        assert_eq!(prepare_landmarks(&Points::from_scalars(&[1.0, 2.0, 1.0])).unwrap().len(), 2);
    }
}
