//! Treatment-effect surrogates combining a D1 embedding with a D2 regression.

pub mod build;
pub mod finite;
pub mod moments;
pub mod models;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::points::Points;

pub use build::{fit_fusion, FusionConfig, FusionFit};
pub use finite::{finite_approx, FiniteGp, FixedMoments, GpSource};
pub use moments::{inner_product_cov, inner_product_moments, GaussianMoments};
pub use models::{BayesImeModel, BayesImpModel, BayesImpOptions, BayesImpVariant, Collapse, CovTerms, ImpModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Imp,
    BayesIme,
    BayesImp,
    Sampling,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Imp => "IMP",
            ModelKind::BayesIme => "BayesIME",
            ModelKind::BayesImp => "BayesIMP",
            ModelKind::Sampling => "Sampling",
        }
    }
}

/// A surrogate for `E[T | do(X) = x]` with mean `m(x)` and covariance `κ(x, x')`.
pub trait TreatmentEffect: Send + Sync {
    fn kind(&self) -> ModelKind;

    fn mean(&self, x: &[f64]) -> Result<f64>;

    fn cov(&self, x: &[f64], x2: &[f64]) -> Result<f64>;

    fn variance(&self, x: &[f64]) -> Result<f64> {
        self.cov(x, x)
    }

    /// Mean vector and covariance matrix over a grid.
    fn grid_moments(&self, grid: &Points) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let n = grid.len();
        let mut mean = DVector::zeros(n);
        let mut cov = DMatrix::zeros(n, n);
        for i in 0..n {
            mean[i] = self.mean(grid.row(i))?;
            for j in 0..=i {
                let v = self.cov(grid.row(i), grid.row(j))?;
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
        }
        Ok((mean, cov))
    }
}

impl<T: TreatmentEffect + ?Sized> TreatmentEffect for Box<T> {
    fn kind(&self) -> ModelKind {
        (**self).kind()
    }
    fn mean(&self, x: &[f64]) -> Result<f64> {
        (**self).mean(x)
    }
    fn cov(&self, x: &[f64], x2: &[f64]) -> Result<f64> {
        (**self).cov(x, x2)
    }
    fn grid_moments(&self, grid: &Points) -> Result<(DVector<f64>, DMatrix<f64>)> {
        (**self).grid_moments(grid)
    }
}

/// A Gaussian prior on a fixed grid of treatment values.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPrior {
    pub grid: Points,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// Whether negative eigenvalues had to be clipped.
    pub clipped: bool,
}

/// Projects the symmetrised grid covariance onto the PSD cone; returns the
/// input unchanged (after symmetrisation) when it is already PSD.
pub fn project_psd(cov: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let sym = crate::kernel::symmetrize(cov);
    let n = sym.nrows();
    if n == 0 {
        return (sym, false);
    }
    let eig = SymmetricEigen::new(sym.clone());
    if eig.eigenvalues.iter().all(|&v| v >= 0.0) {
        return (sym, false);
    }
    let clipped = eig.eigenvalues.map(|v| v.max(0.0));
    let mut out = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    out = crate::kernel::symmetrize(&out);
    let jitter = 1e-10 * (out.trace() / n as f64).max(f64::MIN_POSITIVE);
    for i in 0..n {
        out[(i, i)] += jitter;
    }
    (out, true)
}

/// Evaluates a surrogate on a grid and turns it into a valid Gaussian prior.
pub fn moment_match_to_gp<T: TreatmentEffect + ?Sized>(model: &T, grid: &Points) -> Result<GridPrior> {
    if grid.is_empty() {
        return Err(Error::EmptyInput("moment-matching grid"));
    }
    let (mean, cov) = model.grid_moments(grid)?;
    if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("{} moments are not finite", model.kind().name())));
    }
    let (cov, clipped) = project_psd(&cov);
    Ok(GridPrior {
        grid: grid.clone(),
        mean,
        cov,
        clipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psd_input_is_untouched() {
        let c = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let (out, clipped) = project_psd(&c);
        assert!(!clipped);
        assert!((out - c).amax() < 1e-10);
    }

    #[test]
    fn negative_eigenvalue_is_clipped() {
        // eigenvalues 1 and -1e-6
        let a = 0.5 * (1.0 - 1e-6);
        let b = 0.5 * (1.0 + 1e-6);
        let c = DMatrix::from_row_slice(2, 2, &[a, b, b, a]);
        let (out, clipped) = project_psd(&c);
        assert!(clipped);
        assert!(crate::kernel::min_eigenvalue(&out) >= 0.0);
    }

    struct Scalar;
    impl TreatmentEffect for Scalar {
        fn kind(&self) -> ModelKind {
            ModelKind::Imp
        }
        fn mean(&self, x: &[f64]) -> Result<f64> {
            Ok(x[0] * 2.0)
        }
        fn cov(&self, _: &[f64], _: &[f64]) -> Result<f64> {
            Ok(-0.5)
        }
    }

    #[test]
    fn single_point_grid() {
        let p = moment_match_to_gp(&Scalar, &Points::from_scalars(&[1.5])).unwrap();
        assert_eq!(p.mean[0], 3.0);
        assert!(p.cov[(0, 0)] >= 0.0 && p.cov[(0, 0)] < 1e-12);
        assert!(moment_match_to_gp(&Scalar, &Points::empty(1)).is_err());
    }
}
