//! The four subcommands. Each computes everything in memory, then writes its
//! files in one all-or-nothing pass.

use std::path::Path;
use std::sync::Arc;

use log::{info, warn};
use rayon::prelude::*;

use crate::bo::{linear_grid, BoTrace, SamplingConfig};
use crate::cli::config::RunConfig;
use crate::cli::output::{format_float, OutputSet, Table};
use crate::error::{Error, Result};
use crate::experiments::{
    ablation_replicate, bo_replicate, calibration_analysis, calibration_replicate, curve_diagnostics, default_mass_grid, median, quantile,
    race_iterations, rng::derive_seed, truth_curve, BoMethod, BoSettings, CalibrationCell, Generator, StudySetup, ABLATION_METHODS,
};
use crate::fusion::ModelKind;
use crate::kernel::RbfKernel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Gen,
    Ablation,
    Bo,
    Calibrate,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Gen => "gen",
            Command::Ablation => "ablation",
            Command::Bo => "bo",
            Command::Calibrate => "calibrate",
        }
    }
}

pub fn run(command: Command, config: &RunConfig, out_dir: &Path) -> Result<()> {
    let mut out = OutputSet::new();
    out.text("meta.txt", meta(command, config));
    match command {
        Command::Gen => gen(config, &mut out)?,
        Command::Ablation => ablation(config, &mut out)?,
        Command::Bo => bo(config, &mut out)?,
        Command::Calibrate => calibrate(config, &mut out)?,
    }
    out.commit(out_dir)?;
    for p in out.paths() {
        info!("wrote {}", out_dir.join(p).display());
    }
    Ok(())
}

fn meta(command: Command, config: &RunConfig) -> String {
    format!(
        "command = {}\nseed = {}\ngenerator = {}\ngit = {}\n",
        command.name(),
        config.data.seed,
        config.data.generator.name(),
        env!("BAYESIMP_GIT_DESCRIBE")
    )
}

pub fn study_setup(config: &RunConfig) -> Result<StudySetup> {
    let generator = Arc::new(Generator::new(config.generator_spec())?);
    let mut setup = StudySetup::new(generator, config.data.n, config.data.m);
    if let Some(t) = &config.data.treatment {
        setup.treatment = t.clone();
    }
    setup.fusion = config.fusion_config();
    setup.sampling = SamplingConfig {
        l: config.bo.l,
        r: config.bo.r,
        ..SamplingConfig::default()
    };
    Ok(setup)
}

/// Configured treatment range, or the observed range in the root-seed D1.
fn treatment_range(config: &RunConfig, setup: &StudySetup) -> Result<(f64, f64)> {
    let (lo, hi) = match (config.bo.grid_min, config.bo.grid_max) {
        (Some(lo), Some(hi)) => (lo, hi),
        (lo, hi) => {
            let (d1, _) = setup.data(config.data.seed)?;
            let x = d1.column(&setup.treatment)?;
            let min = x.iter().copied().fold(f64::INFINITY, f64::min);
            let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (lo.unwrap_or(min), hi.unwrap_or(max))
        }
    };
    if !(lo < hi) {
        return Err(Error::ConfigSection(format!("[bo] empty treatment range [{lo}, {hi}]")));
    }
    Ok((lo, hi))
}

fn grid_xs(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    Ok(linear_grid(lo, hi, n)?.rows().map(|r| r[0]).collect())
}

fn seeds(config: &RunConfig) -> Vec<u64> {
    (0..config.bo.seeds as u64).map(|k| config.data.seed.wrapping_add(k)).collect()
}

fn f(v: f64) -> String {
    format_float(v)
}

fn gen(config: &RunConfig, out: &mut OutputSet) -> Result<()> {
    let setup = study_setup(config)?;
    let (d1, d2) = setup.data(config.data.seed)?;
    out.table("d1.csv", &Table::from_dataset(&d1)?)?;
    out.table("d2.csv", &Table::from_dataset(&d2)?)?;
    Ok(())
}

fn ablation(config: &RunConfig, out: &mut OutputSet) -> Result<()> {
    let setup = study_setup(config)?;
    let (lo, hi) = treatment_range(config, &setup)?;
    let xs = grid_xs(lo, hi, config.bo.grid_size)?;
    let seeds = seeds(config);
    let replicates = seeds
        .par_iter()
        .map(|&s| ablation_replicate(&setup, s, &xs))
        .collect::<Result<Vec<_>>>()?;

    let center = 0.0f64.clamp(lo, hi);
    let mut summary = Table::new(&["seed", "method", "std_min", "std_max", "max_min_ratio", "spike_ratio", "wide_width"]);
    for kind in ABLATION_METHODS {
        let mut curves = Table::new(&["seed", "x", "mean", "std"]);
        for (&seed, rep) in seeds.iter().zip(&replicates) {
            let Some((_, curve)) = rep.iter().find(|(k, _)| *k == kind) else {
                continue;
            };
            for p in curve {
                curves.push(vec![seed.to_string(), f(p.x), f(p.mean), f(p.std)]);
            }
            let d = curve_diagnostics(curve, center);
            if kind == ModelKind::Imp {
                info!("seed {seed}: IMP spike ratio {:.3}", d.spike_ratio);
            }
            summary.push(vec![
                seed.to_string(),
                kind.name().to_string(),
                f(d.std_min),
                f(d.std_max),
                f(d.std_max / d.std_min),
                f(d.spike_ratio),
                f(d.wide_width),
            ]);
        }
        out.table(format!("curves_{}.csv", kind.name()), &curves)?;
    }
    out.table("summary.csv", &summary)?;
    Ok(())
}

pub fn bo_settings(config: &RunConfig, lo: f64, hi: f64) -> Result<BoSettings> {
    Ok(BoSettings {
        grid: linear_grid(lo, hi, config.bo.grid_size)?,
        budget: config.bo.budget,
        noise: config.bo.noise_mode(),
        pilot_x: config.bo.pilot_x.unwrap_or(0.5 * (lo + hi)),
        oracle_samples: config.bo.oracle_samples,
        options: config.bo.options(),
        baseline_kernel: RbfKernel::isotropic(1, config.kernel.baseline_lengthscale, config.kernel.signal_variance)?,
    })
}

fn trace_table(trace: &BoTrace) -> Table {
    let mut t = Table::new(&["iter", "x", "t", "incumbent", "ei"]);
    for r in &trace.records {
        t.push(vec![(r.iter + 1).to_string(), f(r.x), f(r.t), f(r.incumbent), f(r.ei)]);
    }
    t
}

fn bo(config: &RunConfig, out: &mut OutputSet) -> Result<()> {
    let setup = study_setup(config)?;
    let (lo, hi) = treatment_range(config, &setup)?;
    let settings = bo_settings(config, lo, hi)?;
    let xs: Vec<f64> = settings.grid.rows().map(|r| r[0]).collect();
    let truth = truth_curve(&setup, &xs, config.bo.mc_samples, derive_seed(config.data.seed, "truth"))?;
    let seeds = seeds(config);
    let runs = seeds
        .par_iter()
        .map(|&s| bo_replicate(&setup, s, &settings))
        .collect::<Result<Vec<_>>>()?;

    let mut truth_table = Table::new(&["x", "truth"]);
    for (x, t) in xs.iter().zip(&truth) {
        truth_table.push(vec![f(*x), f(*t)]);
    }
    out.table("truth.csv", &truth_table)?;

    let mut aggregate = Table::new(&["method", "iter", "median", "q25", "q75", "runs"]);
    let mut iterations = Table::new(&["method", "seed", "iterations"]);
    let mut race = Table::new(&["method", "median_iterations", "q25", "q75"]);
    for method in BoMethod::ALL {
        let traces: Vec<(u64, &BoTrace)> = seeds
            .iter()
            .zip(&runs)
            .filter_map(|(&s, run)| run.iter().find(|(k, _)| *k == method).map(|(_, t)| (s, t)))
            .collect();
        for (seed, trace) in &traces {
            if let Some(e) = &trace.error {
                warn!("{} seed {seed}: trace truncated after {} queries: {e}", method.name(), trace.records.len());
            }
            out.table(format!("traces/{}_seed{seed}.csv", method.name()), &trace_table(trace))?;
        }
        for i in 0..settings.budget {
            let inc: Vec<f64> = traces.iter().filter_map(|(_, t)| t.records.get(i).map(|r| r.incumbent)).collect();
            if inc.is_empty() {
                break;
            }
            aggregate.push(vec![
                method.name().to_string(),
                (i + 1).to_string(),
                f(median(&inc)),
                f(quantile(&inc, 0.25)),
                f(quantile(&inc, 0.75)),
                inc.len().to_string(),
            ]);
        }
        let mut its = Vec::new();
        for (seed, run) in seeds.iter().zip(&runs) {
            for (k, n) in race_iterations(run, &settings, &truth, config.bo.tolerance) {
                if k == method {
                    iterations.push(vec![method.name().to_string(), seed.to_string(), n.to_string()]);
                    its.push(n as f64);
                }
            }
        }
        info!("{}: median iterations to tolerance {}", method.name(), median(&its));
        race.push(vec![method.name().to_string(), f(median(&its)), f(quantile(&its, 0.25)), f(quantile(&its, 0.75))]);
    }
    out.table("aggregate.csv", &aggregate)?;
    out.table("iterations.csv", &iterations)?;
    out.table("race.csv", &race)?;
    Ok(())
}

fn calibrate(config: &RunConfig, out: &mut OutputSet) -> Result<()> {
    let setup = study_setup(config)?;
    let (lo, hi) = treatment_range(config, &setup)?;
    let xs = grid_xs(lo, hi, config.bo.calibration_points)?;
    let truth = truth_curve(&setup, &xs, config.bo.mc_samples, derive_seed(config.data.seed, "truth"))?;
    let masses = default_mass_grid();
    let seeds = seeds(config);
    let replicates = seeds
        .par_iter()
        .map(|&s| calibration_replicate(&setup, s, &xs, &truth))
        .collect::<Result<Vec<_>>>()?;

    let mut table = Table::new(&["method", "nominal", "empirical", "deviation"]);
    let mut per_seed = Table::new(&["method", "seed", "deviation"]);
    let mut pooled_dev = Vec::new();
    let mut median_dev = Vec::new();
    for kind in ABLATION_METHODS {
        let mut pooled: Vec<CalibrationCell> = Vec::new();
        let mut devs = Vec::new();
        for (&seed, rep) in seeds.iter().zip(&replicates) {
            if let Some((_, cells)) = rep.iter().find(|(k, _)| *k == kind) {
                let d = calibration_analysis(cells, &masses)?.deviation;
                per_seed.push(vec![kind.name().to_string(), seed.to_string(), f(d)]);
                devs.push(d);
                pooled.extend_from_slice(cells);
            }
        }
        let report = calibration_analysis(&pooled, &masses)?;
        for row in &report.rows {
            table.push(vec![kind.name().to_string(), f(row.nominal), f(row.empirical), f(report.deviation)]);
        }
        pooled_dev.push((kind, report.deviation));
        median_dev.push((kind, median(&devs)));
    }
    let pick = |v: &[(ModelKind, f64)], k: ModelKind| v.iter().find(|(m, _)| *m == k).map_or(f64::NAN, |p| p.1);
    let mut comparison = Table::new(&["statistic", "BayesIMP", "Sampling", "bayesimp_better"]);
    for (name, v) in [("pooled", &pooled_dev), ("median_per_seed", &median_dev)] {
        let (b, s) = (pick(v, ModelKind::BayesImp), pick(v, ModelKind::Sampling));
        info!("calibration deviation ({name}): BayesIMP {b:.4}, Sampling {s:.4}");
        comparison.push(vec![name.to_string(), f(b), f(s), (b < s).to_string()]);
    }
    out.table("calibration.csv", &table)?;
    out.table("deviations.csv", &per_seed)?;
    out.table("comparison.csv", &comparison)?;
    Ok(())
}
