//! Positive-definite kernels, Gram construction and jittered SPD solves.
//!
//! Only kernel evaluations are ever materialised; feature maps stay implicit.
//! Every `(K + λI)^{-1}` in the crate goes through [`SpdFactor`], which applies
//! one library-wide jitter schedule and reports the jitter it needed.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};
use crate::points::Points;

/// Jitter multipliers (relative to the mean diagonal) tried in order.
pub const JITTER_SCHEDULE: [f64; 4] = [0.0, 1e-10, 1e-8, 1e-6];

pub trait Kernel: Send + Sync {
    fn input_dim(&self) -> usize;

    /// Unchecked evaluation; callers guarantee both points have `input_dim` entries.
    fn eval(&self, a: &[f64], b: &[f64]) -> f64;
}

impl<K: Kernel + ?Sized> Kernel for &K {
    fn input_dim(&self) -> usize {
        (**self).input_dim()
    }
    fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        (**self).eval(a, b)
    }
}

/// Squared-exponential kernel with one lengthscale per input dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct RbfKernel {
    lengthscales: Vec<f64>,
    signal_variance: f64,
}

impl RbfKernel {
    pub fn new(lengthscales: Vec<f64>, signal_variance: f64) -> Result<Self> {
        if lengthscales.is_empty() {
            return Err(Error::invalid("rbf kernel needs at least one lengthscale"));
        }
        if lengthscales.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::invalid(format!(
                "rbf lengthscales must be positive, got {lengthscales:?}"
            )));
        }
        if !(signal_variance > 0.0 && signal_variance.is_finite()) {
            return Err(Error::invalid(format!(
                "rbf signal variance must be positive, got {signal_variance}"
            )));
        }
        Ok(RbfKernel {
            lengthscales,
            signal_variance,
        })
    }

    pub fn isotropic(dim: usize, lengthscale: f64, signal_variance: f64) -> Result<Self> {
        RbfKernel::new(vec![lengthscale; dim.max(1)], signal_variance)
    }

    pub fn lengthscales(&self) -> &[f64] {
        &self.lengthscales
    }

    pub fn signal_variance(&self) -> f64 {
        self.signal_variance
    }

    pub fn with_signal_variance(&self, v: f64) -> Result<Self> {
        RbfKernel::new(self.lengthscales.clone(), v)
    }

    pub fn with_lengthscales(&self, l: Vec<f64>) -> Result<Self> {
        RbfKernel::new(l, self.signal_variance)
    }

    /// Derivatives of the Gram matrix w.r.t. each log-lengthscale.
    pub fn gram_log_lengthscale_derivs(&self, points: &Points) -> Vec<DMatrix<f64>> {
        let n = points.len();
        let k = DMatrix::from_fn(n, n, |i, j| self.eval(points.row(i), points.row(j)));
        (0..self.lengthscales.len())
            .map(|d| {
                let l2 = self.lengthscales[d] * self.lengthscales[d];
                DMatrix::from_fn(n, n, |i, j| {
                    let diff = points.row(i)[d] - points.row(j)[d];
                    k[(i, j)] * diff * diff / l2
                })
            })
            .collect()
    }
}

impl Kernel for RbfKernel {
    fn input_dim(&self) -> usize {
        self.lengthscales.len()
    }

    #[inline]
    fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut s = 0.0;
        for ((x, y), l) in a.iter().zip(b).zip(&self.lengthscales) {
            let d = (x - y) / l;
            s += d * d;
        }
        self.signal_variance * (-0.5 * s).exp()
    }
}

/// Checked RBF evaluation.
pub fn rbf_eval(kernel: &RbfKernel, a: &[f64], b: &[f64]) -> Result<f64> {
    check_dim(kernel.input_dim(), a.len())?;
    check_dim(kernel.input_dim(), b.len())?;
    Ok(kernel.eval(a, b))
}

/// `r(y, y') = ∫ k(y, u) k(u, y') exp(-|u|²/(2η²)) du` for an RBF base `k`,
/// evaluated in closed form (diagonal lengthscales only).
#[derive(Debug, Clone, PartialEq)]
pub struct NuclearKernel {
    base: RbfKernel,
    eta: f64,
}

impl NuclearKernel {
    pub fn new(base: RbfKernel, eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::invalid(format!(
                "nuclear measure width must be positive, got {eta}"
            )));
        }
        Ok(NuclearKernel { base, eta })
    }

    pub fn base(&self) -> &RbfKernel {
        &self.base
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn with_eta(&self, eta: f64) -> Result<Self> {
        NuclearKernel::new(self.base.clone(), eta)
    }

    /// d r(a, b) / d log η.
    pub fn d_log_eta(&self, a: &[f64], b: &[f64]) -> f64 {
        let inv_eta2 = 1.0 / (self.eta * self.eta);
        let eta2 = self.eta * self.eta;
        let mut dlog = 0.0;
        for ((x, y), l) in a.iter().zip(b).zip(&self.base.lengthscales) {
            let l2 = l * l;
            dlog += inv_eta2 / (2.0 / l2 + inv_eta2);
            let m = 0.5 * (x + y);
            let s = 0.5 * l2 + eta2;
            dlog += m * m * eta2 / (s * s);
        }
        self.eval(a, b) * dlog
    }
}

impl Kernel for NuclearKernel {
    fn input_dim(&self) -> usize {
        self.base.input_dim()
    }

    fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let inv_eta2 = 1.0 / (self.eta * self.eta);
        let eta2 = self.eta * self.eta;
        let mut log_r = 0.0;
        for ((x, y), l) in a.iter().zip(b).zip(&self.base.lengthscales) {
            let l2 = l * l;
            // (2π)^{1/2} (2/ℓ² + 1/η²)^{-1/2}
            log_r += 0.5 * (2.0 * std::f64::consts::PI).ln() - 0.5 * (2.0 / l2 + inv_eta2).ln();
            let gap = x - y;
            log_r -= 0.5 * gap * gap / (2.0 * l2);
            let m = 0.5 * (x + y);
            log_r -= 0.5 * m * m / (0.5 * l2 + eta2);
        }
        let s2 = self.base.signal_variance;
        s2 * s2 * log_r.exp()
    }
}

/// Checked nuclear-kernel evaluation.
pub fn nuclear_eval(kernel: &NuclearKernel, a: &[f64], b: &[f64]) -> Result<f64> {
    check_dim(kernel.input_dim(), a.len())?;
    check_dim(kernel.input_dim(), b.len())?;
    Ok(kernel.eval(a, b))
}

/// Adds a white-noise term `nugget · [a == b]` to an inner kernel.
///
/// Equality is exact (bitwise on coordinates), so the nugget lands on the
/// Gram diagonal and on query points that coincide with training points.
#[derive(Debug, Clone, PartialEq)]
pub struct Nugget<K> {
    pub inner: K,
    pub nugget: f64,
}

impl<K: Kernel> Kernel for Nugget<K> {
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let v = self.inner.eval(a, b);
        if self.nugget != 0.0 && a == b {
            v + self.nugget
        } else {
            v
        }
    }
}

/// A symmetric Gram matrix together with the jitter applied to it (always 0
/// at construction; jitter is added at solve time).
#[derive(Debug, Clone)]
pub struct GramBundle {
    pub matrix: DMatrix<f64>,
    pub jitter_used: f64,
}

pub fn gram<K: Kernel + ?Sized>(kernel: &K, points: &Points) -> Result<GramBundle> {
    if points.is_empty() {
        return Err(Error::EmptyInput("gram points"));
    }
    check_dim(kernel.input_dim(), points.dim())?;
    let n = points.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = kernel.eval(points.row(i), points.row(j));
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(GramBundle {
        matrix: m,
        jitter_used: 0.0,
    })
}

pub fn cross_gram<K: Kernel + ?Sized>(
    kernel: &K,
    a: &Points,
    b: &Points,
) -> Result<DMatrix<f64>> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput("cross-gram points"));
    }
    check_dim(kernel.input_dim(), a.dim())?;
    check_dim(kernel.input_dim(), b.dim())?;
    Ok(DMatrix::from_fn(a.len(), b.len(), |i, j| {
        kernel.eval(a.row(i), b.row(j))
    }))
}

/// Kernel vector `[k(p_i, x)]_i`.
pub fn kernel_column<K: Kernel + ?Sized>(kernel: &K, points: &Points, x: &[f64]) -> DVector<f64> {
    DVector::from_fn(points.len(), |i, _| kernel.eval(points.row(i), x))
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// Cholesky factor of `matrix + ridge·I + jitter·I`.
#[derive(Clone, Debug)]
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
    jitter_used: f64,
    ridge: f64,
}

impl SpdFactor {
    /// Factorises with the library jitter schedule. `label` names the matrix in errors.
    pub fn new(matrix: &DMatrix<f64>, ridge: f64, label: &str) -> Result<Self> {
        let n = matrix.nrows();
        if n == 0 {
            return Err(Error::EmptyInput("spd matrix"));
        }
        if matrix.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: matrix.ncols(),
            });
        }
        if !(ridge >= 0.0) {
            return Err(Error::invalid(format!("ridge must be nonnegative, got {ridge}")));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("matrix `{label}` has non-finite entries")));
        }
        let mean_diag = (matrix.trace() / n as f64 + ridge).abs().max(f64::MIN_POSITIVE);
        let mut last = 0.0;
        for &mult in JITTER_SCHEDULE.iter() {
            let jitter = mult * mean_diag;
            last = jitter;
            let mut a = matrix.clone();
            // symmetrise; callers hand us matrices that are symmetric up to rounding
            for i in 0..n {
                for j in 0..i {
                    let v = 0.5 * (a[(i, j)] + a[(j, i)]);
                    a[(i, j)] = v;
                    a[(j, i)] = v;
                }
                a[(i, i)] += ridge + jitter;
            }
            if let Some(chol) = Cholesky::new(a) {
                return Ok(SpdFactor {
                    chol,
                    jitter_used: jitter,
                    ridge,
                });
            }
        }
        Err(Error::Singular {
            what: label.to_string(),
            jitter: last,
        })
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    pub fn jitter_used(&self) -> f64 {
        self.jitter_used
    }

    /// Total diagonal shift (ridge plus jitter).
    pub fn shift(&self) -> f64 {
        self.ridge + self.jitter_used
    }

    pub fn solve(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(rhs)
    }

    pub fn solve_vec(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(rhs)
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// Lower-triangular factor `L` with `L Lᵀ` equal to the shifted matrix.
    pub fn l(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    /// Solves `L x = rhs` (forward substitution).
    pub fn solve_lower(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        let l = self.chol.l();
        l.solve_lower_triangular(rhs)
            .expect("cholesky factor has a positive diagonal")
    }
}

/// Result of a one-shot SPD solve.
#[derive(Clone, Debug)]
pub struct SpdSolution {
    pub solution: DMatrix<f64>,
    pub jitter_used: f64,
}

/// Solves `(matrix + ridge·I + jitter·I) x = rhs`.
pub fn solve_spd(matrix: &DMatrix<f64>, rhs: &DMatrix<f64>, ridge: f64) -> Result<SpdSolution> {
    if rhs.nrows() != matrix.nrows() {
        return Err(Error::DimensionMismatch {
            expected: matrix.nrows(),
            got: rhs.nrows(),
        });
    }
    let f = SpdFactor::new(matrix, ridge, "solve_spd")?;
    Ok(SpdSolution {
        solution: f.solve(rhs),
        jitter_used: f.jitter_used(),
    })
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = symmetrize(m);
    SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// True when `min eig >= -rel_tol · trace / n`.
pub fn is_psd_within(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    let n = m.nrows().max(1) as f64;
    min_eigenvalue(m) >= -rel_tol * (m.trace().abs() / n)
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn rbf1(l: f64) -> RbfKernel {
        RbfKernel::isotropic(1, l, 1.0).unwrap()
    }

    #[test]
    fn rbf_identity_and_closed_form() {
        let k = rbf1(1.0);
        assert_eq!(rbf_eval(&k, &[0.0], &[0.0]).unwrap(), 1.0);
        assert_relative_eq!(rbf_eval(&k, &[0.0], &[1.0]).unwrap(), 0.606_530_659_712_633_4, epsilon = 1e-12);
        let k2 = RbfKernel::isotropic(2, 2.0, 1.0).unwrap();
        assert_relative_eq!(rbf_eval(&k2, &[0.0, 0.0], &[2.0, 2.0]).unwrap(), (-1.0f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn rbf_dimension_mismatch() {
        let k = rbf1(1.0);
        assert!(matches!(
            rbf_eval(&k, &[0.0, 1.0], &[0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn nuclear_closed_form_examples() {
        let r = NuclearKernel::new(rbf1(1.0), 1.0).unwrap();
        let c = (2.0 * std::f64::consts::PI / 3.0).sqrt();
        assert_relative_eq!(nuclear_eval(&r, &[0.0], &[0.0]).unwrap(), 1.447_202_508_339_84, epsilon = 1e-6);
        assert_relative_eq!(r.eval(&[0.0], &[0.0]), c, epsilon = 1e-14);
        assert_relative_eq!(r.eval(&[1.0], &[-1.0]), c * (-1.0f64).exp(), epsilon = 1e-14);
        let wide = NuclearKernel::new(rbf1(1.0), 1e6).unwrap();
        assert_relative_eq!(wide.eval(&[0.0], &[0.0]), std::f64::consts::PI.sqrt(), epsilon = 1e-9);
    }

    #[test]
    fn nuclear_rejects_bad_parameters() {
        assert!(NuclearKernel::new(rbf1(1.0), 0.0).is_err());
        assert!(RbfKernel::isotropic(1, -1.0, 1.0).is_err());
    }

    #[test]
    fn nuclear_eta_derivative_matches_differences() {
        let r = NuclearKernel::new(RbfKernel::new(vec![0.7, 1.3], 1.2).unwrap(), 1.4).unwrap();
        let (a, b) = ([0.3, -0.8], [1.1, 0.4]);
        let h: f64 = 1e-6;
        let up = r.with_eta(1.4 * h.exp()).unwrap().eval(&a, &b);
        let dn = r.with_eta(1.4 * (-h).exp()).unwrap().eval(&a, &b);
        assert_relative_eq!(r.d_log_eta(&a, &b), (up - dn) / (2.0 * h), max_relative = 1e-6);
    }

    #[test]
    fn gram_examples() {
        let k = rbf1(1.0);
        let g = gram(&k, &Points::from_scalars(&[0.3])).unwrap();
        assert_eq!(g.matrix[(0, 0)], 1.0);
        assert_eq!(g.jitter_used, 0.0);
        let g = gram(&k, &Points::from_scalars(&[0.5, 0.5])).unwrap();
        assert!(g.matrix.iter().all(|&v| v == 1.0));
        let pts = Points::from_scalars(&[0.1, -1.3, 2.2]);
        let g = gram(&k, &pts).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(g.matrix[(i, j)], rbf_eval(&k, pts.row(i), pts.row(j)).unwrap());
            }
        }
        assert!(gram(&k, &Points::empty(1)).is_err());
    }

    #[test]
    fn solve_examples() {
        let b = DMatrix::from_column_slice(3, 1, &[1.0, -2.0, 3.0]);
        let s = solve_spd(&DMatrix::identity(3, 3), &b, 0.0).unwrap();
        assert_eq!(s.solution, b);
        assert_eq!(s.jitter_used, 0.0);
        let s = solve_spd(&DMatrix::from_element(1, 1, 2.0), &DMatrix::from_element(1, 1, 1.0), 0.0).unwrap();
        assert_relative_eq!(s.solution[(0, 0)], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn singular_matrix_escalates_then_fails() {
        // rank-one all-ones matrix needs jitter
        let ones = DMatrix::from_element(3, 3, 1.0);
        let f = SpdFactor::new(&ones, 0.0, "ones").unwrap();
        assert!(f.jitter_used() > 0.0);
        let neg = -DMatrix::<f64>::identity(2, 2);
        match SpdFactor::new(&neg, 0.0, "K_test") {
            Err(Error::Singular { what, .. }) => assert_eq!(what, "K_test"),
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn nugget_only_on_coincident_points() {
        let k = Nugget {
            inner: rbf1(1.0),
            nugget: 0.5,
        };
        assert_eq!(k.eval(&[1.0], &[1.0]), 1.5);
        assert_eq!(k.eval(&[1.0], &[2.0]), rbf1(1.0).eval(&[1.0], &[2.0]));
    }
}
