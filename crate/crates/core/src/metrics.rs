//! Classical and quantum synchronization measures.

use nalgebra::Matrix4;
use std::f64::consts::PI;

use crate::error::{Result, SimError};
use crate::meanfield::OrbitSummary;

/// Below this squared error the classical measure is reported as perfect.
pub const PERFECT_SYNC_EPS: f64 = 1e-12;

/// Classical synchronization of the mean quadratures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassicalSync {
    /// `q_-^2 + p_-^2` with `q_- = (q1 - q2)/sqrt2`, `p_- = (p1 - p2)/sqrt2`.
    pub error: f64,
    /// `1/error`, or `None` when the error is below [`PERFECT_SYNC_EPS`].
    pub value: Option<f64>,
}

impl ClassicalSync {
    pub fn is_perfect(&self) -> bool {
        self.value.is_none()
    }
}

/// `S_c` from mean quadratures `[q1, p1, q2, p2]`.
pub fn classical_sync(quads: &[f64; 4]) -> ClassicalSync {
    let qm = (quads[0] - quads[2]) / std::f64::consts::SQRT_2;
    let pm = (quads[1] - quads[3]) / std::f64::consts::SQRT_2;
    let error = qm * qm + pm * pm;
    ClassicalSync {
        error,
        value: (error >= PERFECT_SYNC_EPS).then(|| 1.0 / error),
    }
}

/// Bracket of the phase-adjusted measure: twice the error-mode variance.
pub fn sync_bracket(c: &Matrix4<f64>, phi: f64) -> f64 {
    let (s, co) = phi.sin_cos();
    c[(0, 0)] + c[(1, 1)] + c[(2, 2)] + c[(3, 3)] + 2.0 * s * c[(1, 2)]
        - 2.0 * s * c[(0, 3)]
        - 2.0 * co * c[(0, 2)]
        - 2.0 * co * c[(1, 3)]
}

/// `S_q^phi = 2 / bracket(C, phi)`.
pub fn quantum_sync_phi(c: &Matrix4<f64>, phi: f64) -> Result<f64> {
    let bracket = sync_bracket(c, phi);
    if bracket.is_nan() || bracket <= 0.0 {
        return Err(SimError::DegenerateCovariance { bracket });
    }
    Ok(2.0 / bracket)
}

/// Complete quantum synchronization, `S_q = S_q^0`.
pub fn quantum_sync(c: &Matrix4<f64>) -> Result<f64> {
    quantum_sync_phi(c, 0.0)
}

/// Maps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// Circular mean of `phase2 - phase1` over the samples both summaries share.
pub fn phase_difference(orbits: &[OrbitSummary; 2]) -> Result<f64> {
    let [o1, o2] = orbits;
    let n = o1.phase.len().min(o2.phase.len());
    if n == 0 {
        return Err(SimError::EmptyWindow);
    }
    let (mut s, mut c) = (0.0, 0.0);
    for k in 0..n {
        let d = o2.phase[k] - o1.phase[k];
        s += d.sin();
        c += d.cos();
    }
    Ok(wrap_angle(s.atan2(c)))
}

/// Number of trailing samples covered by a window fraction.
pub fn window_len(len: usize, fraction: f64) -> usize {
    ((fraction * len as f64).round() as usize).clamp(1, len.max(1))
}

/// Arithmetic mean over the trailing `fraction` of the samples.
pub fn time_average(series: &[f64], fraction: f64) -> Result<f64> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(SimError::InvalidArgument(format!(
            "window fraction must be in (0, 1], got {fraction}"
        )));
    }
    if series.is_empty() {
        return Err(SimError::EmptyWindow);
    }
    let w = window_len(series.len(), fraction);
    let tail = &series[series.len() - w..];
    Ok(tail.iter().sum::<f64>() / w as f64)
}

/// Symmetric Hausdorff distance between two planar point clouds.
pub fn hausdorff_distance(a: &[(f64, f64)], b: &[(f64, f64)]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(SimError::EmptyWindow);
    }
    let directed = |from: &[(f64, f64)], to: &[(f64, f64)]| {
        from.iter()
            .map(|&(x, y)| {
                to.iter()
                    .map(|&(u, v)| (x - u) * (x - u) + (y - v) * (y - v))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0f64, f64::max)
            .sqrt()
    };
    Ok(directed(a, b).max(directed(b, a)))
}
