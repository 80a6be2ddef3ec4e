//! Configuration, figure presets, runs, thermal sweeps and the self-test.

pub mod config;
pub mod run;
pub mod selftest;

pub use config::{preset, ConfigError, CovInit, RunConfig, PRESETS, REPORTED_PHI, SWEEP_NM};
pub use run::{
    run_scenario, run_thermal_sweep, simulate, thermal_sweep, PhiSource, ScenarioError, Simulation,
    Summary, SweepPoint, TrajectoryRecord, SWEEP_HEADER, TRAJECTORY_HEADER,
};
pub use selftest::{selftest, CheckStatus, SelftestOptions, SelftestReport};
