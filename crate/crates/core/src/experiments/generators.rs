//! Structural causal models behind the synthetic and semi-synthetic experiments.
//!
//! Each generator splits sampling into exogenous draws (standard normals and
//! uniforms, independent of any intervention) and a deterministic
//! `propagate` step. Observational and interventional samples share the same
//! structural equations; an intervention replaces the assignment of one
//! variable and leaves everything else untouched.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::embedding::AdjustmentSpec;
use crate::error::{Error, Result};
use crate::experiments::rng::stream;
use crate::gp::{fit_rbf_gp, variance, GpModel, OptimConfig};
use crate::kernel::RbfKernel;
use crate::points::{median_heuristic, Dataset, Points};

const PSA_VOLUME_CSV: &str = include_str!("../../data/psa_volume.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GeneratorKind {
    Ablation,
    SimpleSynthetic,
    HardSynthetic,
    Healthcare,
}

impl GeneratorKind {
    pub const ALL: [GeneratorKind; 4] = [
        GeneratorKind::Ablation,
        GeneratorKind::SimpleSynthetic,
        GeneratorKind::HardSynthetic,
        GeneratorKind::Healthcare,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            GeneratorKind::Ablation => "ablation",
            GeneratorKind::SimpleSynthetic => "simple",
            GeneratorKind::HardSynthetic => "hard",
            GeneratorKind::Healthcare => "healthcare",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        GeneratorKind::ALL.into_iter().find(|k| k.name() == s)
    }

    fn exogenous_len(&self) -> usize {
        match self {
            GeneratorKind::Ablation => 2,
            GeneratorKind::SimpleSynthetic => 5,
            GeneratorKind::HardSynthetic => 9,
            GeneratorKind::Healthcare => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    /// Standard deviation of the additive noises. Ignored by the healthcare
    /// model, whose noise levels are part of its equations.
    pub noise: f64,
    /// Mixture weight of the shifted mode (simple and hard graphs).
    pub pi: f64,
}

impl GeneratorSpec {
    pub fn new(kind: GeneratorKind) -> Self {
        let noise = if kind == GeneratorKind::HardSynthetic { 1.0 } else { 0.1 };
        let pi = match kind {
            GeneratorKind::Ablation | GeneratorKind::Healthcare => 0.0,
            _ => 0.5,
        };
        GeneratorSpec { kind, noise, pi }
    }

    pub fn with_noise(mut self, noise: f64) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_pi(mut self, pi: f64) -> Self {
        self.pi = pi;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.pi) {
            return Err(Error::invalid("π out of range [0,1]"));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::invalid(format!("noise must be finite and nonnegative, got {}", self.noise)));
        }
        Ok(())
    }
}

/// `do(variable = value)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intervention<'a> {
    pub variable: &'a str,
    pub value: f64,
}

/// D2 regression target of the healthcare model: a GP fitted to the bundled
/// PSA → cancer-volume table.
#[derive(Debug, Clone)]
struct PsaVolume {
    gp: Arc<GpModel<RbfKernel>>,
    range: (f64, f64),
}

fn logistic(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

fn parse_psa_table(text: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut psa = Vec::new();
    let mut vol = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let parse = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::invalid("malformed PSA/volume row"))
        };
        psa.push(parse(0)?);
        vol.push(parse(1)?);
    }
    if psa.is_empty() {
        return Err(Error::EmptyInput("PSA/volume table"));
    }
    Ok((psa, vol))
}

impl PsaVolume {
    fn fit(text: &str) -> Result<Self> {
        let (psa, vol) = parse_psa_table(text)?;
        let x = Points::from_scalars(&psa);
        let v = variance(&vol);
        let k0 = RbfKernel::isotropic(1, median_heuristic(&x), v)?;
        let (gp, _) = fit_rbf_gp(&x, &vol, &k0, 0.1 * v, &[], &OptimConfig::default())?;
        let lo = psa.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = psa.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(PsaVolume {
            gp: Arc::new(gp),
            range: (lo, hi),
        })
    }
}

#[derive(Debug, Clone)]
pub struct Generator {
    spec: GeneratorSpec,
    psa: Option<PsaVolume>,
}

impl Generator {
    pub fn new(spec: GeneratorSpec) -> Result<Self> {
        spec.validate()?;
        let psa = match spec.kind {
            GeneratorKind::Healthcare => Some(PsaVolume::fit(PSA_VOLUME_CSV)?),
            _ => None,
        };
        Ok(Generator { spec, psa })
    }

    /// Healthcare generator backed by a user-supplied `psa,volume` table.
    pub fn healthcare_with_table(text: &str) -> Result<Self> {
        Ok(Generator {
            spec: GeneratorSpec::new(GeneratorKind::Healthcare),
            psa: Some(PsaVolume::fit(text)?),
        })
    }

    pub fn spec(&self) -> &GeneratorSpec {
        &self.spec
    }

    pub fn kind(&self) -> GeneratorKind {
        self.spec.kind
    }

    pub fn d1_columns(&self) -> &'static [&'static str] {
        match self.spec.kind {
            GeneratorKind::Ablation => &["x", "y"],
            GeneratorKind::SimpleSynthetic => &["x", "u", "z", "y"],
            GeneratorKind::HardSynthetic => &["u1", "u2", "f", "a", "b", "c", "d", "e", "y"],
            GeneratorKind::Healthcare => &["age", "bmi", "aspirin", "statin", "cancer", "psa"],
        }
    }

    pub fn mediator(&self) -> &'static str {
        match self.spec.kind {
            GeneratorKind::Healthcare => "psa",
            _ => "y",
        }
    }

    pub fn default_treatment(&self) -> &'static str {
        match self.spec.kind {
            GeneratorKind::Ablation | GeneratorKind::SimpleSynthetic => "x",
            GeneratorKind::HardSynthetic => "d",
            GeneratorKind::Healthcare => "statin",
        }
    }

    /// Valid adjustment for `do(treatment)`.
    pub fn adjustment_spec(&self, treatment: &str) -> Result<AdjustmentSpec> {
        let y = self.mediator();
        let spec = match (self.spec.kind, treatment) {
            (GeneratorKind::Ablation, "x") => AdjustmentSpec::backdoor("x", &[], y),
            (GeneratorKind::SimpleSynthetic, "x") => AdjustmentSpec::backdoor("x", &["z"], y),
            (GeneratorKind::HardSynthetic, "d") => AdjustmentSpec::backdoor("d", &["c"], y),
            (GeneratorKind::HardSynthetic, "e") => AdjustmentSpec::backdoor("e", &["a", "c"], y),
            (GeneratorKind::Healthcare, "statin") => AdjustmentSpec::backdoor("statin", &["age", "bmi"], y),
            _ => {
                return Err(Error::invalid(format!(
                    "no adjustment set for do({treatment}) in the {} generator",
                    self.spec.kind.name()
                )))
            }
        };
        Ok(spec)
    }

    /// Range of the D2 mediator law.
    pub fn d2_range(&self) -> (f64, f64) {
        match self.spec.kind {
            GeneratorKind::Ablation => (-2.0, 2.0),
            GeneratorKind::SimpleSynthetic => (-10.0, 10.0),
            GeneratorKind::HardSynthetic => (-2.0, 9.0),
            GeneratorKind::Healthcare => self.psa.as_ref().map(|p| p.range).unwrap_or((0.0, 1.0)),
        }
    }

    /// Noise-free outcome map `E[T | Y = y]`.
    pub fn outcome(&self, y: f64) -> f64 {
        match self.spec.kind {
            GeneratorKind::Ablation => 0.5 * y * y.cos(),
            GeneratorKind::SimpleSynthetic => y.cos() - (-y / 20.0).exp(),
            GeneratorKind::HardSynthetic => 6.0 * (3.0 * y).sin(),
            GeneratorKind::Healthcare => self.psa.as_ref().map(|p| p.gp.mean(&[y])).unwrap_or(f64::NAN),
        }
    }

    /// Standard deviation of `T` around `outcome(Y)`.
    pub fn outcome_noise(&self) -> f64 {
        match self.spec.kind {
            GeneratorKind::Healthcare => self.psa.as_ref().map(|p| p.gp.noise().sqrt()).unwrap_or(0.0),
            _ => self.spec.noise,
        }
    }

    pub fn sample_exogenous(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let n = self.spec.kind.exogenous_len();
        let uniform_slots: &[usize] = match self.spec.kind {
            GeneratorKind::Ablation => &[],
            GeneratorKind::SimpleSynthetic => &[0, 4],
            GeneratorKind::HardSynthetic => &[8],
            GeneratorKind::Healthcare => &[0],
        };
        (0..n)
            .map(|i| {
                if uniform_slots.contains(&i) {
                    rng.random::<f64>()
                } else {
                    rng.sample::<f64, _>(StandardNormal)
                }
            })
            .collect()
    }

    /// Values of the D1 columns (in `d1_columns` order) for one exogenous draw.
    pub fn propagate(&self, exo: &[f64], intervention: Option<Intervention<'_>>) -> Result<Vec<f64>> {
        let expected = self.spec.kind.exogenous_len();
        if exo.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: exo.len(),
            });
        }
        if let Some(iv) = intervention {
            if !self.d1_columns().contains(&iv.variable) {
                return Err(Error::MissingColumn(iv.variable.to_string()));
            }
            if !iv.value.is_finite() {
                return Err(Error::invalid("intervention value must be finite"));
            }
        }
        let set = |name: &str, natural: f64| match intervention {
            Some(iv) if iv.variable == name => iv.value,
            _ => natural,
        };
        let s = self.spec.noise;
        let out = match self.spec.kind {
            GeneratorKind::Ablation => {
                let x = set("x", 2.5 * exo[0]);
                let y = set("y", x * (PI * x).cos() + s * exo[1]);
                vec![x, y]
            }
            GeneratorKind::SimpleSynthetic => {
                let z = set("z", -4.0 + 8.0 * exo[0]);
                let x = set("x", 3.0 * z.cos() + s * exo[1]);
                let shifted = exo[4] < self.spec.pi;
                let u_mean = if shifted { 2.0 * (x - 1.0) - 3.0 } else { 2.0 * x };
                let u = set("u", u_mean + s * exo[2]);
                let y = set("y", u + (-z).exp() + s * exo[3]);
                vec![x, u, z, y]
            }
            GeneratorKind::HardSynthetic => {
                let u1 = set("u1", exo[0]);
                let u2 = set("u2", exo[1]);
                let f = set("f", exo[2]);
                let a = set("a", f * f + u1 + s * exo[3]);
                let b = set("b", u2 + s * exo[4]);
                let c = set("c", (-b).exp() + s * exo[5]);
                let d = set("d", (-c).exp() / 10.0 + s * exo[6]);
                let e = set("e", a.cos() + c / 10.0 + s * exo[7]);
                let shift = if exo[8] < self.spec.pi { 2.0 * PI } else { 0.0 };
                let y = set("y", d.cos() + e.sin() + u1 + u2 + shift);
                vec![u1, u2, f, a, b, c, d, e, y]
            }
            GeneratorKind::Healthcare => {
                let age = set("age", 15.0 + 60.0 * exo[0]);
                let bmi = set("bmi", 27.0 - 0.01 * age + 0.7 * exo[1]);
                let aspirin = set("aspirin", logistic(-8.0 + 0.1 * age + 0.03 * bmi));
                let statin = set("statin", -13.0 + 0.1 * age + 0.2 * bmi);
                let cancer = set(
                    "cancer",
                    logistic(2.2 - 0.05 * age + 0.01 * bmi - 0.04 * statin + 0.02 * aspirin),
                );
                let psa = set(
                    "psa",
                    6.8 + 0.04 * age - 0.15 * bmi - 0.6 * statin + 0.55 * aspirin + cancer + 0.4 * exo[2],
                );
                vec![age, bmi, aspirin, statin, cancer, psa]
            }
        };
        Ok(out)
    }

    pub fn mediator_index(&self) -> usize {
        let m = self.mediator();
        self.d1_columns().iter().position(|c| *c == m).unwrap_or(0)
    }

    pub fn sample_d1(&self, n: usize, rng: &mut ChaCha8Rng) -> Result<Dataset> {
        let names = self.d1_columns();
        let mut columns = vec![Vec::with_capacity(n); names.len()];
        for _ in 0..n {
            let exo = self.sample_exogenous(rng);
            for (col, v) in columns.iter_mut().zip(self.propagate(&exo, None)?) {
                col.push(v);
            }
        }
        Dataset::new(names.iter().map(|s| s.to_string()).collect(), columns)
    }

    /// `ỹ` uniform on `d2_range`, `t = outcome(ỹ) + noise`.
    pub fn sample_d2(&self, m: usize, rng: &mut ChaCha8Rng) -> Result<Dataset> {
        let (lo, hi) = self.d2_range();
        let sd = self.outcome_noise();
        let mut ys = Vec::with_capacity(m);
        let mut ts = Vec::with_capacity(m);
        for _ in 0..m {
            let y = lo + (hi - lo) * rng.random::<f64>();
            let e: f64 = rng.sample(StandardNormal);
            ys.push(y);
            ts.push(self.outcome(y) + sd * e);
        }
        Dataset::new(vec![self.mediator().to_string(), "t".to_string()], vec![ys, ts])
    }

    /// Both datasets from independent named streams of `seed`.
    pub fn generate(&self, n: usize, m: usize, seed: u64) -> Result<(Dataset, Dataset)> {
        if n == 0 || m == 0 {
            return Err(Error::invalid("dataset sizes must be at least 1"));
        }
        let d1 = self.sample_d1(n, &mut stream(seed, "data-d1"))?;
        let d2 = self.sample_d2(m, &mut stream(seed, "data-d2"))?;
        Ok((d1, d2))
    }
}

pub fn gen_ablation(n: usize, m: usize, noise: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    Generator::new(GeneratorSpec::new(GeneratorKind::Ablation).with_noise(noise))?.generate(n, m, seed)
}

pub fn gen_simple_synthetic(n: usize, m: usize, pi: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    Generator::new(GeneratorSpec::new(GeneratorKind::SimpleSynthetic).with_pi(pi))?.generate(n, m, seed)
}

pub fn gen_hard_synthetic(n: usize, m: usize, pi: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    Generator::new(GeneratorSpec::new(GeneratorKind::HardSynthetic).with_pi(pi))?.generate(n, m, seed)
}

pub fn gen_healthcare(n: usize, m: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    Generator::new(GeneratorSpec::new(GeneratorKind::Healthcare))?.generate(n, m, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noiseless(kind: GeneratorKind) -> Generator {
        Generator::new(GeneratorSpec::new(kind).with_noise(0.0).with_pi(0.0)).unwrap()
    }

    #[test]
    fn ablation_chain() {
        let g = noiseless(GeneratorKind::Ablation);
        let v = g.propagate(&[0.4, 0.0], None).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-15);
        assert!((v[1] + 1.0).abs() < 1e-12);
        assert_eq!(g.outcome(0.0), 0.0);
    }

    #[test]
    fn simple_chain() {
        let g = noiseless(GeneratorKind::SimpleSynthetic);
        // z = 0 at u = 0.5
        let v = g.propagate(&[0.5, 0.0, 0.0, 0.0, 0.9], None).unwrap();
        assert_eq!(v, vec![3.0, 6.0, 0.0, 7.0]);
        assert_eq!(g.outcome(0.0), 0.0);
        let shifted = Generator::new(GeneratorSpec::new(GeneratorKind::SimpleSynthetic).with_noise(0.0).with_pi(1.0)).unwrap();
        let v = shifted.propagate(&[0.5, 0.0, 0.0, 0.0, 0.9], None).unwrap();
        assert_eq!(v[1], 1.0);
    }

    #[test]
    fn hard_chain() {
        let g = noiseless(GeneratorKind::HardSynthetic);
        let v = g.propagate(&[0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.7], None).unwrap();
        assert_eq!(&v[3..6], &[1.0, 0.0, 1.0]);
        assert!((v[6] - 0.036788).abs() < 1e-6);
        assert!((v[7] - 0.640302).abs() < 1e-6);
        let mixed = Generator::new(GeneratorSpec::new(GeneratorKind::HardSynthetic).with_noise(0.0).with_pi(1.0)).unwrap();
        let w = mixed.propagate(&[0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.7], None).unwrap();
        assert!((w[8] - v[8] - 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn healthcare_equations() {
        let g = noiseless(GeneratorKind::Healthcare);
        let v = g.propagate(&[35.0 / 60.0, 0.0, 0.0], Some(Intervention { variable: "bmi", value: 25.0 })).unwrap();
        assert!((v[0] - 50.0).abs() < 1e-12);
        assert!((v[3] + 3.0).abs() < 1e-12);
        let mut rng = stream(3, "t");
        let d1 = g.sample_d1(500, &mut rng).unwrap();
        assert!(d1.column("age").unwrap().iter().all(|a| (15.0..=75.0).contains(a)));
        assert!(d1.column("aspirin").unwrap().iter().all(|a| *a > 0.0 && *a < 1.0));
    }

    #[test]
    fn fixture_is_required() {
        assert!(Generator::healthcare_with_table("psa,volume\n").is_err());
    }

    #[test]
    fn intervention_at_observed_value_reproduces_sample() {
        for kind in GeneratorKind::ALL {
            let g = Generator::new(GeneratorSpec::new(kind)).unwrap();
            let mut rng = stream(11, kind.name());
            for _ in 0..20 {
                let exo = g.sample_exogenous(&mut rng);
                let obs = g.propagate(&exo, None).unwrap();
                for (i, name) in g.d1_columns().iter().enumerate() {
                    let iv = Intervention { variable: name, value: obs[i] };
                    assert_eq!(g.propagate(&exo, Some(iv)).unwrap(), obs);
                }
            }
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let a = gen_simple_synthetic(20, 10, 0.5, 4).unwrap();
        let b = gen_simple_synthetic(20, 10, 0.5, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, gen_simple_synthetic(20, 10, 0.5, 5).unwrap());
    }

    #[test]
    fn pi_is_validated() {
        let err = gen_simple_synthetic(5, 5, 1.5, 0).unwrap_err();
        assert!(err.to_string().contains("π out of range [0,1]"));
    }
}
