//! INI-style run configuration: `[section]` headers, `key = value` lines, `#` comments.

use std::fmt::Write as _;
use std::path::PathBuf;

use crate::bo::{BoOptions, Direction, NoiseMode, TieBreak};
use crate::error::{Error, Result};
use crate::experiments::{GeneratorKind, GeneratorSpec};
use crate::fusion::{BayesImpVariant, FusionConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lengthscale {
    Median,
    Fixed(f64),
    /// Learned by evidence (outcome kernel only).
    Evidence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub generator: GeneratorKind,
    pub n: usize,
    pub m: usize,
    /// `None` keeps the generator default.
    pub pi: Option<f64>,
    pub noise: Option<f64>,
    pub seed: u64,
    pub treatment: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelConfig {
    pub lengthscale_x: Lengthscale,
    pub lengthscale_z: Lengthscale,
    pub lengthscale_y: Lengthscale,
    /// `None` uses twice the median mediator norm.
    pub eta: Option<f64>,
    /// Signal variance of the optimisation baselines' RBF kernel.
    pub signal_variance: f64,
    /// Lengthscale of the optimisation baselines' RBF kernel.
    pub baseline_lengthscale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub ridge: f64,
    pub ridge_f: Option<f64>,
    pub inner_ridge: Option<f64>,
    pub r_nugget: f64,
    pub landmark_cap: usize,
    pub landmark_nugget: f64,
    pub optimize: bool,
    pub frozen: Vec<String>,
    pub variant: BayesImpVariant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoConfig {
    /// `None` uses the observed treatment range of the root-seed data.
    pub grid_min: Option<f64>,
    pub grid_max: Option<f64>,
    pub grid_size: usize,
    pub budget: usize,
    pub seeds: usize,
    pub l: usize,
    pub r: usize,
    /// Observation noise variance; `None` estimates it from pilot queries.
    pub noise: Option<f64>,
    pub pilot_calls: usize,
    /// `None` uses the grid midpoint.
    pub pilot_x: Option<f64>,
    pub oracle_samples: usize,
    pub direction: Direction,
    pub tie_break: TieBreak,
    pub tolerance: f64,
    pub mc_samples: usize,
    pub calibration_points: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OutConfig {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: DataConfig,
    pub kernel: KernelConfig,
    pub model: ModelConfig,
    pub bo: BoConfig,
    pub out: OutConfig,
}

impl DataConfig {
    fn new(generator: GeneratorKind) -> Self {
        DataConfig {
            generator,
            n: 100,
            m: 100,
            pi: None,
            noise: None,
            seed: 0,
            treatment: None,
        }
    }
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            lengthscale_x: Lengthscale::Median,
            lengthscale_z: Lengthscale::Median,
            lengthscale_y: Lengthscale::Median,
            eta: None,
            signal_variance: 1.0,
            baseline_lengthscale: 1.0,
        }
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        let f = FusionConfig::default();
        ModelConfig {
            ridge: f.ridge,
            ridge_f: f.ridge_f,
            inner_ridge: f.inner_ridge,
            r_nugget: f.r_nugget,
            landmark_cap: f.bayesimp.landmark_cap,
            landmark_nugget: f.bayesimp.landmark_nugget,
            optimize: f.optimize,
            frozen: f.frozen,
            variant: f.bayesimp.variant,
        }
    }
}

impl Default for BoConfig {
    fn default() -> Self {
        BoConfig {
            grid_min: None,
            grid_max: None,
            grid_size: 200,
            budget: 30,
            seeds: 10,
            l: 100,
            r: 100,
            noise: None,
            pilot_calls: 10,
            pilot_x: None,
            oracle_samples: 100,
            direction: Direction::Max,
            tie_break: TieBreak::LowestIndex,
            tolerance: 0.05,
            mc_samples: 10_000,
            calibration_points: 21,
        }
    }
}

impl RunConfig {
    pub fn new(generator: GeneratorKind) -> Self {
        RunConfig {
            data: DataConfig::new(generator),
            kernel: KernelConfig::default(),
            model: ModelConfig::default(),
            bo: BoConfig::default(),
            out: OutConfig::default(),
        }
    }

    pub fn generator_spec(&self) -> GeneratorSpec {
        let mut s = GeneratorSpec::new(self.data.generator);
        if let Some(pi) = self.data.pi {
            s = s.with_pi(pi);
        }
        if let Some(noise) = self.data.noise {
            s = s.with_noise(noise);
        }
        s
    }

    pub fn fusion_config(&self) -> FusionConfig {
        let fixed = |l: Lengthscale| match l {
            Lengthscale::Fixed(v) => Some(v),
            _ => None,
        };
        let mut f = FusionConfig {
            ridge: self.model.ridge,
            ridge_f: self.model.ridge_f,
            inner_ridge: self.model.inner_ridge,
            r_nugget: self.model.r_nugget,
            eta: self.kernel.eta,
            lengthscale_x: fixed(self.kernel.lengthscale_x),
            lengthscale_z: fixed(self.kernel.lengthscale_z),
            lengthscale_y: fixed(self.kernel.lengthscale_y),
            learn_lengthscale_y: self.kernel.lengthscale_y == Lengthscale::Evidence,
            optimize: self.model.optimize,
            frozen: self.model.frozen.clone(),
            ..FusionConfig::default()
        };
        f.bayesimp.landmark_cap = self.model.landmark_cap;
        f.bayesimp.landmark_nugget = self.model.landmark_nugget;
        f.bayesimp.variant = self.model.variant;
        f
    }

    /// Parses configuration text; unknown sections and keys are rejected with their line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut section: Option<String> = None;
        let mut seen_sections: Vec<String> = Vec::new();
        let mut entries: Vec<(usize, String, String, String)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| config_err(line_no, "unterminated section header"))?
                    .trim()
                    .to_string();
                if !SECTIONS.contains(&name.as_str()) {
                    return Err(config_err(line_no, format!("unknown section [{name}]")));
                }
                if seen_sections.contains(&name) {
                    return Err(config_err(line_no, format!("duplicate section [{name}]")));
                }
                seen_sections.push(name.clone());
                section = Some(name);
                continue;
            }
            let Some(sec) = &section else {
                return Err(config_err(line_no, "key outside of any section"));
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| config_err(line_no, format!("expected `key = value`, got `{line}`")))?;
            let key = key.trim().to_string();
            if entries.iter().any(|(_, s, k, _)| s == sec && *k == key) {
                return Err(config_err(line_no, format!("duplicate key `{key}` in [{sec}]")));
            }
            entries.push((line_no, sec.clone(), key, value.trim().to_string()));
        }
        if !seen_sections.iter().any(|s| s == "data") {
            return Err(Error::ConfigSection("missing [data] section".into()));
        }
        let generator = entries
            .iter()
            .find(|(_, s, k, _)| s == "data" && k == "generator")
            .ok_or_else(|| Error::ConfigSection("missing key `generator` in [data] section".into()))?;
        let generator = GeneratorKind::parse(&generator.3)
            .ok_or_else(|| config_err(generator.0, format!("unknown generator `{}`", generator.3)))?;
        let mut cfg = RunConfig::new(generator);
        for (line, sec, key, value) in &entries {
            cfg.set(sec, key, value).map_err(|msg| config_err(*line, msg))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, section: &str, key: &str, v: &str) -> std::result::Result<(), String> {
        match (section, key) {
            ("data", "generator") => {}
            ("data", "n") => self.data.n = positive(v)?,
            ("data", "m") => self.data.m = positive(v)?,
            ("data", "pi") => {
                self.data.pi = auto(v, |v| {
                    let pi = float(v)?;
                    if !(0.0..=1.0).contains(&pi) {
                        return Err("π out of range [0,1]".into());
                    }
                    Ok(pi)
                })?
            }
            ("data", "noise") => self.data.noise = auto(v, nonneg)?,
            ("data", "seed") => self.data.seed = v.parse().map_err(|_| format!("invalid seed `{v}`"))?,
            ("data", "treatment") => self.data.treatment = auto(v, |s| Ok(s.to_string()))?,
            ("kernel", "lengthscale_x") => self.kernel.lengthscale_x = lengthscale(v, false)?,
            ("kernel", "lengthscale_z") => self.kernel.lengthscale_z = lengthscale(v, false)?,
            ("kernel", "lengthscale_y") => self.kernel.lengthscale_y = lengthscale(v, true)?,
            ("kernel", "eta") => {
                self.kernel.eta = if v == "median" { None } else { Some(pos_float(v)?) };
            }
            ("kernel", "signal_variance") => self.kernel.signal_variance = pos_float(v)?,
            ("kernel", "baseline_lengthscale") => self.kernel.baseline_lengthscale = pos_float(v)?,
            ("model", "ridge") => self.model.ridge = pos_float(v)?,
            ("model", "ridge_f") => self.model.ridge_f = auto(v, pos_float)?,
            ("model", "inner_ridge") => self.model.inner_ridge = auto(v, pos_float)?,
            ("model", "r_nugget") => self.model.r_nugget = nonneg(v)?,
            ("model", "landmark_cap") => self.model.landmark_cap = positive(v)?,
            ("model", "landmark_nugget") => self.model.landmark_nugget = nonneg(v)?,
            ("model", "optimize") => self.model.optimize = boolean(v)?,
            ("model", "frozen") => {
                self.model.frozen = v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect();
            }
            ("model", "variant") => {
                self.model.variant = match v {
                    "landmark" => BayesImpVariant::Landmark,
                    "direct" => BayesImpVariant::Direct,
                    _ => return Err(format!("variant must be `landmark` or `direct`, got `{v}`")),
                }
            }
            ("bo", "grid_min") => self.bo.grid_min = auto(v, float)?,
            ("bo", "grid_max") => self.bo.grid_max = auto(v, float)?,
            ("bo", "grid_size") => self.bo.grid_size = positive(v)?,
            ("bo", "budget") => self.bo.budget = count(v)?,
            ("bo", "seeds") => self.bo.seeds = positive(v)?,
            ("bo", "l") => self.bo.l = at_least_two(v)?,
            ("bo", "r") => self.bo.r = at_least_two(v)?,
            ("bo", "noise") => self.bo.noise = if v == "pilot" { None } else { Some(pos_float(v)?) },
            ("bo", "pilot_calls") => self.bo.pilot_calls = at_least_two(v)?,
            ("bo", "pilot_x") => self.bo.pilot_x = auto(v, float)?,
            ("bo", "oracle_samples") => self.bo.oracle_samples = positive(v)?,
            ("bo", "direction") => {
                self.bo.direction = match v {
                    "max" => Direction::Max,
                    "min" => Direction::Min,
                    _ => return Err(format!("direction must be `max` or `min`, got `{v}`")),
                }
            }
            ("bo", "tie_break") => {
                self.bo.tie_break = match v {
                    "lowest" => TieBreak::LowestIndex,
                    "random" => TieBreak::Random,
                    _ => return Err(format!("tie_break must be `lowest` or `random`, got `{v}`")),
                }
            }
            ("bo", "tolerance") => {
                let t = float(v)?;
                if !(t > 0.0 && t < 1.0) {
                    return Err("tolerance must lie in (0,1)".into());
                }
                self.bo.tolerance = t;
            }
            ("bo", "mc_samples") => {
                let mc = positive(v)?;
                if mc < crate::experiments::MIN_MC_SAMPLES {
                    return Err(format!("mc_samples must be at least {}", crate::experiments::MIN_MC_SAMPLES));
                }
                self.bo.mc_samples = mc;
            }
            ("bo", "calibration_points") => self.bo.calibration_points = positive(v)?,
            ("out", "dir") => self.out.dir = Some(PathBuf::from(v)),
            _ => return Err(format!("unknown key `{key}` in [{section}]")),
        }
        Ok(())
    }
}

const SECTIONS: [&str; 5] = ["data", "kernel", "model", "bo", "out"];

impl BoConfig {
    pub fn noise_mode(&self) -> NoiseMode {
        match self.noise {
            Some(v) => NoiseMode::Fixed(v),
            None => NoiseMode::Pilot { calls: self.pilot_calls },
        }
    }

    pub fn options(&self) -> BoOptions {
        BoOptions {
            direction: self.direction,
            tie_break: self.tie_break,
        }
    }
}

impl RunConfig {
    fn validate(&self) -> Result<()> {
        self.generator_spec()
            .validate()
            .map_err(|e| Error::ConfigSection(e.to_string()))?;
        if let (Some(lo), Some(hi)) = (self.bo.grid_min, self.bo.grid_max) {
            if !(lo < hi) {
                return Err(Error::ConfigSection(format!("[bo] grid_min {lo} must be below grid_max {hi}")));
            }
        }
        Ok(())
    }

    /// Canonical text listing every key; parsing it gives back `self`.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let d = &self.data;
        let _ = writeln!(s, "[data]");
        let _ = writeln!(s, "generator = {}", d.generator.name());
        let _ = writeln!(s, "n = {}", d.n);
        let _ = writeln!(s, "m = {}", d.m);
        let _ = writeln!(s, "pi = {}", opt(d.pi));
        let _ = writeln!(s, "noise = {}", opt(d.noise));
        let _ = writeln!(s, "seed = {}", d.seed);
        let _ = writeln!(s, "treatment = {}", d.treatment.as_deref().unwrap_or("auto"));
        let k = &self.kernel;
        let _ = writeln!(s, "\n[kernel]");
        let _ = writeln!(s, "lengthscale_x = {}", render_lengthscale(k.lengthscale_x));
        let _ = writeln!(s, "lengthscale_z = {}", render_lengthscale(k.lengthscale_z));
        let _ = writeln!(s, "lengthscale_y = {}", render_lengthscale(k.lengthscale_y));
        let _ = writeln!(s, "eta = {}", k.eta.map_or("median".to_string(), |v| v.to_string()));
        let _ = writeln!(s, "signal_variance = {}", k.signal_variance);
        let _ = writeln!(s, "baseline_lengthscale = {}", k.baseline_lengthscale);
        let m = &self.model;
        let _ = writeln!(s, "\n[model]");
        let _ = writeln!(s, "ridge = {}", m.ridge);
        let _ = writeln!(s, "ridge_f = {}", opt(m.ridge_f));
        let _ = writeln!(s, "inner_ridge = {}", opt(m.inner_ridge));
        let _ = writeln!(s, "r_nugget = {}", m.r_nugget);
        let _ = writeln!(s, "landmark_cap = {}", m.landmark_cap);
        let _ = writeln!(s, "landmark_nugget = {}", m.landmark_nugget);
        let _ = writeln!(s, "optimize = {}", m.optimize);
        let _ = writeln!(s, "frozen = {}", m.frozen.join(","));
        let variant = match m.variant {
            BayesImpVariant::Landmark => "landmark",
            BayesImpVariant::Direct => "direct",
        };
        let _ = writeln!(s, "variant = {variant}");
        let b = &self.bo;
        let _ = writeln!(s, "\n[bo]");
        let _ = writeln!(s, "grid_min = {}", opt(b.grid_min));
        let _ = writeln!(s, "grid_max = {}", opt(b.grid_max));
        let _ = writeln!(s, "grid_size = {}", b.grid_size);
        let _ = writeln!(s, "budget = {}", b.budget);
        let _ = writeln!(s, "seeds = {}", b.seeds);
        let _ = writeln!(s, "l = {}", b.l);
        let _ = writeln!(s, "r = {}", b.r);
        let _ = writeln!(s, "noise = {}", b.noise.map_or("pilot".to_string(), |v| v.to_string()));
        let _ = writeln!(s, "pilot_calls = {}", b.pilot_calls);
        let _ = writeln!(s, "pilot_x = {}", opt(b.pilot_x));
        let _ = writeln!(s, "oracle_samples = {}", b.oracle_samples);
        let direction = match b.direction {
            Direction::Max => "max",
            Direction::Min => "min",
        };
        let _ = writeln!(s, "direction = {direction}");
        let tie = match b.tie_break {
            TieBreak::LowestIndex => "lowest",
            TieBreak::Random => "random",
        };
        let _ = writeln!(s, "tie_break = {tie}");
        let _ = writeln!(s, "tolerance = {}", b.tolerance);
        let _ = writeln!(s, "mc_samples = {}", b.mc_samples);
        let _ = writeln!(s, "calibration_points = {}", b.calibration_points);
        if let Some(dir) = &self.out.dir {
            let _ = writeln!(s, "\n[out]");
            let _ = writeln!(s, "dir = {}", dir.display());
        }
        s
    }
}

fn config_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Config { line, msg: msg.into() }
}

fn opt(v: Option<f64>) -> String {
    v.map_or("auto".to_string(), |v| v.to_string())
}

fn render_lengthscale(l: Lengthscale) -> String {
    match l {
        Lengthscale::Median => "median".into(),
        Lengthscale::Evidence => "evidence".into(),
        Lengthscale::Fixed(v) => v.to_string(),
    }
}

type Parsed<T> = std::result::Result<T, String>;

fn float(v: &str) -> Parsed<f64> {
    match v.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(format!("expected a finite number, got `{v}`")),
    }
}

fn pos_float(v: &str) -> Parsed<f64> {
    let x = float(v)?;
    if x > 0.0 {
        Ok(x)
    } else {
        Err(format!("expected a positive number, got `{v}`"))
    }
}

fn nonneg(v: &str) -> Parsed<f64> {
    let x = float(v)?;
    if x >= 0.0 {
        Ok(x)
    } else {
        Err(format!("expected a nonnegative number, got `{v}`"))
    }
}

fn count(v: &str) -> Parsed<usize> {
    v.parse().map_err(|_| format!("expected a nonnegative integer, got `{v}`"))
}

fn positive(v: &str) -> Parsed<usize> {
    match count(v)? {
        0 => Err(format!("expected a positive integer, got `{v}`")),
        n => Ok(n),
    }
}

fn at_least_two(v: &str) -> Parsed<usize> {
    match count(v)? {
        n if n >= 2 => Ok(n),
        _ => Err(format!("expected an integer of at least 2, got `{v}`")),
    }
}

fn boolean(v: &str) -> Parsed<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected `true` or `false`, got `{v}`")),
    }
}

fn auto<T>(v: &str, parse: impl Fn(&str) -> Parsed<T>) -> Parsed<Option<T>> {
    if v == "auto" {
        Ok(None)
    } else {
        parse(v).map(Some)
    }
}

fn lengthscale(v: &str, evidence_allowed: bool) -> Parsed<Lengthscale> {
    match v {
        "median" => Ok(Lengthscale::Median),
        "evidence" if evidence_allowed => Ok(Lengthscale::Evidence),
        _ => pos_float(v).map(Lengthscale::Fixed),
    }
}
