//! Coverage of central credible intervals against ground truth.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::fusion::TreatmentEffect;

/// One (seed, x) cell: predictive moments and the true effect.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationCell {
    pub mean: f64,
    pub variance: f64,
    pub truth: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationRow {
    pub nominal: f64,
    pub empirical: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationReport {
    pub rows: Vec<CalibrationRow>,
    /// Mean absolute gap between empirical and nominal coverage.
    pub deviation: f64,
}

/// The nine masses `0.1, …, 0.9`.
pub fn default_mass_grid() -> Vec<f64> {
    (1..10).map(|i| i as f64 / 10.0).collect()
}

/// Predictive moments of `model` at each `x`, paired with `truths`.
pub fn calibration_cells<T: TreatmentEffect + ?Sized>(model: &T, xs: &[f64], truths: &[f64]) -> Result<Vec<CalibrationCell>> {
    if xs.len() != truths.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            got: truths.len(),
        });
    }
    xs.iter()
        .zip(truths)
        .map(|(&x, &truth)| {
            Ok(CalibrationCell {
                mean: model.mean(&[x])?,
                variance: model.variance(&[x])?.max(0.0),
                truth,
            })
        })
        .collect()
}

/// Empirical coverage of the central interval of each mass in `mass_grid`.
pub fn calibration_analysis(cells: &[CalibrationCell], mass_grid: &[f64]) -> Result<CalibrationReport> {
    if cells.is_empty() {
        return Err(Error::EmptyInput("calibration cells"));
    }
    if mass_grid.is_empty() {
        return Err(Error::EmptyInput("mass grid"));
    }
    if let Some(p) = mass_grid.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
        return Err(Error::invalid(format!("credible mass {p} outside (0,1)")));
    }
    let normal = Normal::standard();
    let rows: Vec<CalibrationRow> = mass_grid
        .iter()
        .map(|&p| {
            let z = normal.inverse_cdf(0.5 + 0.5 * p);
            let hits = cells
                .iter()
                .filter(|c| (c.truth - c.mean).abs() <= z * c.variance.max(0.0).sqrt())
                .count();
            CalibrationRow {
                nominal: p,
                empirical: hits as f64 / cells.len() as f64,
            }
        })
        .collect();
    let deviation = rows.iter().map(|r| (r.empirical - r.nominal).abs()).sum::<f64>() / rows.len() as f64;
    Ok(CalibrationReport { rows, deviation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::rng::stream;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn well_specified_model_is_calibrated() {
        let mut rng = stream(0, "cal");
        let cells: Vec<_> = (0..4000)
            .map(|i| {
                let sd = 0.5 + (i % 7) as f64;
                let e: f64 = rng.sample(StandardNormal);
                CalibrationCell {
                    mean: i as f64,
                    variance: sd * sd,
                    truth: i as f64 + sd * e,
                }
            })
            .collect();
        let rep = calibration_analysis(&cells, &default_mass_grid()).unwrap();
        for r in &rep.rows {
            // 4 binomial standard errors
            let se = (r.nominal * (1.0 - r.nominal) / 4000.0).sqrt();
            assert!((r.empirical - r.nominal).abs() < 4.0 * se, "{r:?}");
        }
    }

    #[test]
    fn zero_variance_never_covers_noisy_truth() {
        let cells = [CalibrationCell { mean: 0.0, variance: 0.0, truth: 0.3 }];
        let rep = calibration_analysis(&cells, &default_mass_grid()).unwrap();
        assert!(rep.rows.iter().all(|r| r.empirical == 0.0));
        assert!((rep.deviation - 0.5).abs() < 1e-12);
    }

    #[test]
    fn invalid_masses() {
        let cells = [CalibrationCell { mean: 0.0, variance: 1.0, truth: 0.0 }];
        assert!(calibration_analysis(&cells, &[0.0]).is_err());
        assert!(calibration_analysis(&cells, &[1.0]).is_err());
        assert!(calibration_analysis(&[], &[0.5]).is_err());
    }
}
