//! Bayesian optimisation of interventional effects on a treatment grid.

pub mod ei;
pub mod run;
pub mod sampling;
pub mod surrogate;

pub use ei::{ei, Direction};
pub use run::{argmax_ei, bo_run, estimate_noise, BoOptions, TieBreak, iterations_to_within, BoRecord, BoTrace, NoiseMode, MIN_NOISE_VAR};
pub use sampling::{sampling_baseline, SamplingBaseline, SamplingConfig};
pub use surrogate::{linear_grid, snap_to_grid, Surrogate};
