//! Data-generating processes, intervention oracles and evaluation protocols.

pub mod calibration;
pub mod generators;
pub mod oracle;
pub mod protocols;
pub mod rng;

pub use calibration::{calibration_analysis, calibration_cells, default_mass_grid, CalibrationCell, CalibrationReport, CalibrationRow};
pub use generators::{
    gen_ablation, gen_hard_synthetic, gen_healthcare, gen_simple_synthetic, Generator, GeneratorKind, GeneratorSpec, Intervention,
};
pub use oracle::{true_effect, true_effect_curve, EffectEstimate, InterventionOracle, MIN_MC_SAMPLES};
pub use protocols::{
    ablation_replicate, bo_replicate, calibration_replicate, curve_diagnostics, effect_curve, median, quantile, race_iterations, truth_curve,
    BoMethod, BoSettings, CurveDiagnostics, CurvePoint, StudySetup, ABLATION_METHODS,
};
