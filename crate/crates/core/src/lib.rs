//! Synchronization of two finite spin chains treated as pseudo-bosonic modes.
//!
//! The crate integrates the rotating-frame mean-field amplitudes of the two
//! modes, co-integrates the Gaussian covariance of their quadrature
//! fluctuations under the time-dependent linearized drift, and evaluates
//! classical, complete quantum and phase-adjusted quantum synchronization.

pub mod error;
pub mod fluctuation;
pub mod integrator;
pub mod meanfield;
pub mod metrics;
pub mod model;
pub mod scenario;

pub use error::{Result, SimError};
pub use fluctuation::{CovarianceState, DriftAssembly, FluctCoeffs};
pub use meanfield::{DriftOptions, FTermMode, HpPolicy, MeanFieldState};
pub use model::{DerivedConstants, ModelParams};
