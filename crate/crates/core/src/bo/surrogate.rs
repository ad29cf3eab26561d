//! Gaussian surrogate on a fixed treatment grid, conditioned on interventional observations.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fusion::{GridPrior, TreatmentEffect};
use crate::kernel::{gram, symmetrize, Kernel, RbfKernel, SpdFactor};
use crate::points::Points;

#[derive(Debug, Clone)]
pub struct Surrogate {
    grid: Points,
    prior_mean: DVector<f64>,
    prior_cov: DMatrix<f64>,
    /// Grid index and observed value of each query.
    observations: Vec<(usize, f64)>,
    noise_var: f64,
}

/// Index of the grid point nearest to `x` (lowest index on ties).
pub fn snap_to_grid(grid: &Points, x: &[f64]) -> Result<usize> {
    if grid.is_empty() {
        return Err(Error::EmptyInput("treatment grid"));
    }
    let mut best = (0, f64::INFINITY);
    for (i, row) in grid.rows().enumerate() {
        let d = crate::points::sq_dist(row, x);
        if d < best.1 {
            best = (i, d);
        }
    }
    Ok(best.0)
}

/// `n` evenly spaced scalar treatments on `[lo, hi]`.
pub fn linear_grid(lo: f64, hi: f64, n: usize) -> Result<Points> {
    if n == 0 || !(lo.is_finite() && hi.is_finite()) || hi < lo {
        return Err(Error::invalid(format!("bad grid [{lo}, {hi}] with {n} points")));
    }
    if n == 1 {
        return Ok(Points::from_scalars(&[0.5 * (lo + hi)]));
    }
    let step = (hi - lo) / (n - 1) as f64;
    Ok(Points::from_scalars(&(0..n).map(|i| lo + step * i as f64).collect::<Vec<_>>()))
}

impl Surrogate {
    pub fn new(prior: GridPrior, noise_var: f64) -> Result<Self> {
        if !(noise_var > 0.0 && noise_var.is_finite()) {
            return Err(Error::invalid(format!("observation noise must be positive, got {noise_var}")));
        }
        Ok(Surrogate {
            grid: prior.grid,
            prior_mean: prior.mean,
            prior_cov: prior.cov,
            observations: Vec::new(),
            noise_var,
        })
    }

    /// Zero-mean prior with covariance `kernel` on the grid.
    pub fn zero_prior<K: Kernel>(grid: &Points, kernel: &K, noise_var: f64) -> Result<Self> {
        let cov = gram(kernel, grid)?.matrix;
        Surrogate::new(
            GridPrior {
                grid: grid.clone(),
                mean: DVector::zeros(grid.len()),
                cov,
                clipped: false,
            },
            noise_var,
        )
    }

    /// The plain-GP baseline prior: zero mean, unit RBF.
    pub fn plain_gp(grid: &Points, noise_var: f64) -> Result<Self> {
        Surrogate::zero_prior(grid, &RbfKernel::isotropic(grid.dim(), 1.0, 1.0)?, noise_var)
    }

    /// Causal-GP prior: mean of `model`, covariance `k_rbf(x, x') + s(x) s(x')`
    /// with `s` the model's standard deviation.
    pub fn causal_prior<T: TreatmentEffect + ?Sized>(model: &T, grid: &Points, rbf: &RbfKernel, noise_var: f64) -> Result<Self> {
        let n = grid.len();
        let mut mean = DVector::zeros(n);
        let mut sd = DVector::zeros(n);
        for i in 0..n {
            mean[i] = model.mean(grid.row(i))?;
            sd[i] = model.variance(grid.row(i))?.max(0.0).sqrt();
        }
        let cov = gram(rbf, grid)?.matrix + &sd * sd.transpose();
        Surrogate::new(
            GridPrior {
                grid: grid.clone(),
                mean,
                cov,
                clipped: false,
            },
            noise_var,
        )
    }

    /// Moment-matched prior with a residual kernel: mean `m`, covariance `κ + k_res`.
    pub fn warm_start(prior: GridPrior, residual: &RbfKernel, noise_var: f64) -> Result<Self> {
        let extra = gram(residual, &prior.grid)?.matrix;
        let cov = &prior.cov + extra;
        Surrogate::new(GridPrior { cov, ..prior }, noise_var)
    }

    pub fn grid(&self) -> &Points {
        &self.grid
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn observations(&self) -> &[(usize, f64)] {
        &self.observations
    }

    pub fn observe(&mut self, index: usize, value: f64) -> Result<()> {
        if index >= self.grid.len() {
            return Err(Error::invalid(format!("grid index {index} out of range")));
        }
        if !value.is_finite() {
            return Err(Error::invalid("observation must be finite"));
        }
        self.observations.push((index, value));
        Ok(())
    }

    /// Posterior mean and covariance on the grid.
    pub fn condition(&self) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let k = self.observations.len();
        if k == 0 {
            return Ok((self.prior_mean.clone(), self.prior_cov.clone()));
        }
        let n = self.grid.len();
        let idx: Vec<usize> = self.observations.iter().map(|o| o.0).collect();
        let koo = DMatrix::from_fn(k, k, |a, b| self.prior_cov[(idx[a], idx[b])]);
        let kgo = DMatrix::from_fn(n, k, |i, b| self.prior_cov[(i, idx[b])]);
        let resid = DVector::from_fn(k, |a, _| self.observations[a].1 - self.prior_mean[idx[a]]);
        let factor = SpdFactor::new(&koo, self.noise_var, "surrogate observation covariance")?;
        let mean = &self.prior_mean + &kgo * factor.solve_vec(&resid);
        let cov = symmetrize(&(&self.prior_cov - &kgo * factor.solve(&kgo.transpose())));
        Ok((mean, cov))
    }
}
