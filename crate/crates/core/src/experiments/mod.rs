//! Synthetic data generation, recovery metrics, sweeps, and landscape probes.

mod metrics;
mod oracles;
mod sample;
mod sweep;
mod synth;

pub use metrics::{kernel_error, KernelError};
pub use oracles::{
    basin_oracle, pq_oracle, surrogate_oracle, BasinOracleConfig, Hypothesis, OracleCheck,
    OracleReport,
};
pub use sample::{
    grid_to_csv, landscape_sample, simplex_sample, CriticalPoint, CriticalPointReport,
    LandscapeSample, LandscapeSampleConfig, SampleMode, SamplePoint, SimplexPoint, SimplexSample,
};
pub use sweep::{
    noise_sweep, phase_sweep, sweep_to_csv, PhaseDiagram, PhaseSweepConfig, SweepCell,
    SENTINEL_ERROR, SUCCESS_THRESHOLD,
};
pub use synth::{synth, ActivationModel, KernelModel, SynthInstance, SynthSpec};
