//! The sequential query loop.

use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::bo::ei::{ei, Direction};
use crate::bo::surrogate::Surrogate;
use crate::error::{Error, Result};
use crate::experiments::oracle::InterventionOracle;
use crate::experiments::rng::stream;
use crate::gp::variance;

/// Lower bound on the pilot-estimated observation noise.
pub const MIN_NOISE_VAR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseMode {
    Fixed(f64),
    /// Sample variance of `calls` oracle queries at the grid midpoint.
    Pilot { calls: usize },
}

impl Default for NoiseMode {
    fn default() -> Self {
        NoiseMode::Pilot { calls: 10 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoRecord {
    pub iter: usize,
    pub x: f64,
    pub t: f64,
    /// Best posterior mean over queried points so far (running best in the search direction).
    pub incumbent: f64,
    /// Treatment attaining `incumbent`.
    pub incumbent_x: f64,
    pub ei: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BoTrace {
    pub records: Vec<BoRecord>,
    pub noise_var: f64,
    /// Set when the loop stopped early because of a failure.
    pub error: Option<String>,
}

/// Observation noise per `mode`, drawn from the `bo-pilot` stream.
pub fn estimate_noise(oracle: &InterventionOracle, x: f64, mode: NoiseMode, seed: u64) -> Result<f64> {
    match mode {
        NoiseMode::Fixed(v) if v > 0.0 => Ok(v),
        NoiseMode::Fixed(v) => Err(Error::invalid(format!("observation noise must be positive, got {v}"))),
        NoiseMode::Pilot { calls } => {
            if calls < 2 {
                return Err(Error::invalid("pilot noise estimate needs at least two calls"));
            }
            let mut rng = stream(seed, "bo-pilot");
            let obs = (0..calls).map(|_| oracle.query(x, &mut rng)).collect::<Result<Vec<_>>>()?;
            let n = calls as f64;
            Ok((variance(&obs) * n / (n - 1.0)).max(MIN_NOISE_VAR))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieBreak {
    /// The lowest grid index among exact EI ties.
    #[default]
    LowestIndex,
    /// A seeded uniform choice among exact EI ties.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BoOptions {
    pub direction: Direction,
    pub tie_break: TieBreak,
}

/// Grid indices attaining the maximal EI, in increasing order, and that EI.
pub fn argmax_ei(mean: &[f64], var: &[f64], best: f64, direction: Direction) -> (Vec<usize>, f64) {
    let mut arg = (Vec::new(), f64::NEG_INFINITY);
    for (i, (&m, &v)) in mean.iter().zip(var).enumerate() {
        let a = ei(m, v.max(0.0).sqrt(), best, direction);
        if a > arg.1 {
            arg = (vec![i], a);
        } else if a == arg.1 {
            arg.0.push(i);
        }
    }
    arg
}

fn extreme(values: impl Iterator<Item = (usize, f64)>, direction: Direction) -> Option<(usize, f64)> {
    values.fold(None, |acc, (i, v)| match acc {
        Some((_, b)) if !direction.better(v, b) => acc,
        _ => Some((i, v)),
    })
}

/// Runs `budget` rounds of condition → maximise EI → query.
///
/// Oracle or numerical failures truncate the trace and are reported in `error`.
pub fn bo_run(oracle: &InterventionOracle, mut surrogate: Surrogate, budget: usize, seed: u64, options: &BoOptions) -> BoTrace {
    let direction = options.direction;
    let mut trace = BoTrace {
        noise_var: surrogate.noise_var(),
        ..BoTrace::default()
    };
    let mut rng: ChaCha8Rng = stream(seed, "bo-oracle");
    let mut tie_rng: ChaCha8Rng = stream(seed, "bo-ties");
    let mut incumbent: Option<(f64, f64)> = None;
    let start = Instant::now();
    for iter in 0..budget {
        let mut step = || -> Result<BoRecord> {
            let (mean, cov) = surrogate.condition()?;
            let var: Vec<f64> = cov.diagonal().iter().copied().collect();
            // Before any query the best prior mean on the grid serves as the target.
            let best = match incumbent {
                Some((v, _)) => v,
                None => extreme(mean.iter().copied().enumerate(), direction).map(|b| b.1).unwrap_or(0.0),
            };
            let (ties, acq) = argmax_ei(mean.as_slice(), &var, best, direction);
            let idx = match (options.tie_break, ties.len()) {
                (_, 0) => return Err(Error::EmptyInput("treatment grid")),
                (TieBreak::Random, n) if n > 1 => ties[tie_rng.random_range(0..n)],
                _ => ties[0],
            };
            let x = surrogate.grid().row(idx)[0];
            let t = oracle.query(x, &mut rng)?;
            Ok(BoRecord {
                iter,
                x,
                t,
                incumbent: f64::NAN,
                incumbent_x: x,
                ei: acq,
                seconds: 0.0,
            })
        };
        let mut rec = match step() {
            Ok(r) => r,
            Err(e) => {
                trace.error = Some(e.to_string());
                break;
            }
        };
        let idx = crate::bo::surrogate::snap_to_grid(surrogate.grid(), &[rec.x]).unwrap_or(0);
        let post = surrogate.observe(idx, rec.t).and_then(|_| surrogate.condition());
        let mean = match post {
            Ok((m, _)) => m,
            Err(e) => {
                trace.error = Some(e.to_string());
                break;
            }
        };
        let queried = surrogate.observations().iter().map(|&(i, _)| (i, mean[i]));
        let (bi, bv) = extreme(queried, direction).unwrap_or((idx, mean[idx]));
        let candidate = (bv, surrogate.grid().row(bi)[0]);
        incumbent = Some(match incumbent {
            Some(prev) if !direction.better(candidate.0, prev.0) => prev,
            _ => candidate,
        });
        let (v, x) = incumbent.unwrap_or(candidate);
        rec.incumbent = v;
        rec.incumbent_x = x;
        rec.seconds = start.elapsed().as_secs_f64();
        trace.records.push(rec);
    }
    trace
}

/// First iteration (1-based) whose incumbent treatment has true effect within
/// `tol · (max − min)` of the grid optimum; `budget + 1` if never reached.
pub fn iterations_to_within(trace: &BoTrace, grid_xs: &[f64], truth: &[f64], tol: f64, direction: Direction) -> usize {
    let hi = truth.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = truth.iter().copied().fold(f64::INFINITY, f64::min);
    let reached = |v: f64| match direction {
        Direction::Max => v >= hi - tol * (hi - lo),
        Direction::Min => v <= lo + tol * (hi - lo),
    };
    for rec in &trace.records {
        let i = grid_xs
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - rec.incumbent_x).abs().total_cmp(&(b.1 - rec.incumbent_x).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        if reached(truth[i]) {
            return rec.iter + 1;
        }
    }
    trace.records.len() + 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bo::surrogate::linear_grid;
    use crate::experiments::generators::{Generator, GeneratorKind, GeneratorSpec};
    use std::sync::Arc;

    fn oracle(noise: f64) -> InterventionOracle {
        let g = Generator::new(GeneratorSpec::new(GeneratorKind::Ablation).with_noise(noise)).unwrap();
        InterventionOracle::new(Arc::new(g), "x", 1).unwrap()
    }

    #[test]
    fn exhaustive_budget_finds_grid_optimum() {
        let o = oracle(0.0);
        let grid = linear_grid(-1.0, 1.0, 9).unwrap();
        let s = Surrogate::plain_gp(&grid, 1e-6).unwrap();
        let trace = bo_run(&o, s, 9, 0, &BoOptions::default());
        let truth: Vec<f64> = grid.rows().map(|x| {
            let y = x[0] * (std::f64::consts::PI * x[0]).cos();
            0.5 * y * y.cos()
        }).collect();
        let opt = truth.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let last = trace.records.last().unwrap();
        assert!((last.incumbent - opt).abs() < 1e-3, "{} vs {}", last.incumbent, opt);
    }

    #[test]
    fn incumbent_is_monotone_and_runs_repeat() {
        let o = oracle(0.3);
        let grid = linear_grid(-3.0, 3.0, 40).unwrap();
        let s = Surrogate::plain_gp(&grid, 0.09).unwrap();
        let a = bo_run(&o, s.clone(), 12, 5, &BoOptions::default());
        let b = bo_run(&o, s, 12, 5, &BoOptions::default());
        assert!(a.error.is_none());
        assert_eq!(a.records.len(), 12);
        assert!(a.records.windows(2).all(|w| w[1].incumbent >= w[0].incumbent));
        let strip = |t: &BoTrace| t.records.iter().map(|r| (r.x, r.t, r.incumbent, r.ei)).collect::<Vec<_>>();
        assert_eq!(strip(&a), strip(&b));
    }

    #[test]
    fn zero_budget_is_empty() {
        let o = oracle(0.1);
        let s = Surrogate::plain_gp(&linear_grid(0.0, 1.0, 3).unwrap(), 0.1).unwrap();
        assert!(bo_run(&o, s, 0, 0, &BoOptions::default()).records.is_empty());
    }

    #[test]
    fn pilot_noise_is_floored() {
        let v = estimate_noise(&oracle(0.0), 0.0, NoiseMode::Pilot { calls: 10 }, 0).unwrap();
        assert_eq!(v, MIN_NOISE_VAR);
        assert!(estimate_noise(&oracle(0.0), 0.0, NoiseMode::Fixed(0.0), 0).is_err());
    }

    #[test]
    fn ei_ties_prefer_lowest_index() {
        let (i, _) = argmax_ei(&[0.0, 1.0, 1.0], &[1.0, 1.0, 1.0], 0.0, Direction::Max);
        assert_eq!(i, vec![1, 2]);
    }
}
