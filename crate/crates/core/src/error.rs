use num_complex::Complex64;
use thiserror::Error;

/// Failures raised by the model, the integrators and the metrics.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    /// The `1/X` prefactor of every interaction term diverges.
    #[error(
        "singular coupling at t={t}: |X|={x:e} below threshold (beta1={beta1}, beta2={beta2})"
    )]
    SingularCoupling {
        t: f64,
        x: f64,
        beta1: Complex64,
        beta2: Complex64,
    },

    #[error("Holstein-Primakoff truncation invalid at t={t}: oscillator {oscillator} has |beta|^2={occupation} >= {limit}")]
    HpBreakdown {
        t: f64,
        oscillator: usize,
        occupation: f64,
        limit: f64,
    },

    /// `X` changed sign between two grid points, so the trajectory stepped
    /// across the `1/X` singularity. Reported as a warning.
    #[error("coupling denominator changed sign between t={t_before} and t={t_after} (X: {x_before:e} -> {x_after:e})")]
    CouplingSignChange {
        t_before: f64,
        t_after: f64,
        x_before: f64,
        x_after: f64,
    },

    #[error("non-finite value in {what} at t={t}")]
    NonFinite { t: f64, what: String },

    #[error("covariance lost positivity at t={t}: min eigenvalue {min_eigenvalue:e}")]
    PsdViolation { t: f64, min_eigenvalue: f64 },

    #[error("orbit radius {radius:e} too small to define a phase")]
    DegenerateOrbit { radius: f64 },

    #[error("synchronization bracket {bracket:e} is not positive")]
    DegenerateCovariance { bracket: f64 },

    #[error("averaging window contains no samples")]
    EmptyWindow,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl SimError {
    /// Simulation time at which the failure was detected, if any.
    pub fn time(&self) -> Option<f64> {
        match self {
            SimError::SingularCoupling { t, .. }
            | SimError::HpBreakdown { t, .. }
            | SimError::NonFinite { t, .. }
            | SimError::PsdViolation { t, .. } => Some(*t),
            SimError::CouplingSignChange { t_after, .. } => Some(*t_after),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, SimError>;
