//! First two moments of inner products of independent Gaussian vectors.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianMoments {
    pub mean: f64,
    pub variance: f64,
}

fn check_square(m: &DMatrix<f64>, n: usize) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: if m.nrows() != n { m.nrows() } else { m.ncols() },
        });
    }
    Ok(())
}

/// Mean and variance of `XᵀY` for independent `X ~ N(mx, sx)`, `Y ~ N(my, sy)`:
/// `Var = mxᵀ sy mx + myᵀ sx my + tr(sx sy)`.
pub fn inner_product_moments(
    mx: &DVector<f64>,
    sx: &DMatrix<f64>,
    my: &DVector<f64>,
    sy: &DMatrix<f64>,
) -> Result<GaussianMoments> {
    let n = mx.len();
    if my.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: my.len(),
        });
    }
    check_square(sx, n)?;
    check_square(sy, n)?;
    let variance = mx.dot(&(sy * mx)) + my.dot(&(sx * my)) + (sx * sy).trace();
    Ok(GaussianMoments {
        mean: mx.dot(my),
        variance: variance.max(0.0),
    })
}

/// `Cov(XᵀY₁, XᵀY₂)` for `X ~ N(mx, sx)` independent of the jointly Gaussian
/// pair `(Y₁, Y₂)` with cross-covariance `s12 = Cov(Y₁, Y₂)`:
/// `my₁ᵀ sx my₂ + mxᵀ s12 mx + tr(sx s12ᵀ)`.
pub fn inner_product_cov(
    mx: &DVector<f64>,
    sx: &DMatrix<f64>,
    my1: &DVector<f64>,
    my2: &DVector<f64>,
    s12: &DMatrix<f64>,
) -> Result<f64> {
    let n = mx.len();
    for v in [my1, my2] {
        if v.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: v.len(),
            });
        }
    }
    check_square(sx, n)?;
    check_square(s12, n)?;
    Ok(my1.dot(&(sx * my2)) + mx.dot(&(s12 * mx)) + sx.component_mul(s12).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_examples() {
        let one = DMatrix::from_element(1, 1, 1.0);
        let zero_v = DVector::from_element(1, 0.0);
        let m = inner_product_moments(&zero_v, &one, &zero_v, &one).unwrap();
        assert_eq!((m.mean, m.variance), (0.0, 1.0));

        let m = inner_product_moments(
            &DVector::from_element(1, 2.0),
            &DMatrix::zeros(1, 1),
            &DVector::from_element(1, 5.0),
            &DMatrix::from_element(1, 1, 3.0),
        )
        .unwrap();
        assert_eq!((m.mean, m.variance), (10.0, 12.0));
    }

    #[test]
    fn covariance_reduces_to_variance() {
        let mx = DVector::from_vec(vec![0.3, -1.0]);
        let my = DVector::from_vec(vec![1.2, 0.4]);
        let sx = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5]);
        let sy = DMatrix::from_row_slice(2, 2, &[0.7, -0.1, -0.1, 2.0]);
        let v = inner_product_moments(&mx, &sx, &my, &sy).unwrap().variance;
        let c = inner_product_cov(&mx, &sx, &my, &my, &sy).unwrap();
        assert!((v - c).abs() < 1e-14);
    }

    #[test]
    fn dimension_mismatch() {
        let a = DVector::zeros(2);
        let b = DVector::zeros(3);
        let s = DMatrix::identity(2, 2);
        assert!(inner_product_moments(&a, &s, &b, &s).is_err());
    }
}
