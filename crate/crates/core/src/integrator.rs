//! Classical fixed-step fourth-order Runge-Kutta on fixed-size real vectors.

use crate::error::{Result, SimError};

/// One RK4 step of `dy/dt = f(t, y)`.
pub fn rk4_step<const N: usize, F>(f: &mut F, t: f64, y: &[f64; N], dt: f64) -> Result<[f64; N]>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
{
    let half = 0.5 * dt;
    let k1 = f(t, y)?;
    let k2 = f(t + half, &axpy(y, half, &k1))?;
    let k3 = f(t + half, &axpy(y, half, &k2))?;
    let k4 = f(t + dt, &axpy(y, dt, &k3))?;

    let sixth = dt / 6.0;
    let mut out = *y;
    for i in 0..N {
        out[i] += sixth * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(SimError::NonFinite {
            t: t + dt,
            what: "integrator state".into(),
        });
    }
    Ok(out)
}

fn axpy<const N: usize>(y: &[f64; N], a: f64, x: &[f64; N]) -> [f64; N] {
    let mut out = *y;
    for i in 0..N {
        out[i] += a * x[i];
    }
    out
}

/// Number of whole steps of size `dt` covering `horizon`.
pub fn step_count(horizon: f64, dt: f64) -> Result<u64> {
    if !dt.is_finite() || dt <= 0.0 {
        return Err(SimError::InvalidArgument(format!(
            "dt must be > 0, got {dt}"
        )));
    }
    if !horizon.is_finite() || horizon < 0.0 {
        return Err(SimError::InvalidArgument(format!(
            "horizon must be >= 0, got {horizon}"
        )));
    }
    Ok((horizon / dt).round() as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_is_fourth_order() {
        let mut f = |_t: f64, y: &[f64; 1]| Ok([-y[0]]);
        let mut run = |dt: f64| {
            let n = step_count(2.0, dt).unwrap();
            let mut y = [1.0];
            for k in 0..n {
                y = rk4_step(&mut f, k as f64 * dt, &y, dt).unwrap();
            }
            (y[0] - (-2.0f64).exp()).abs()
        };
        let ratio = run(0.1) / run(0.05);
        assert!((ratio - 16.0).abs() < 1.0, "ratio {ratio}");
    }

    #[test]
    fn blow_up_is_reported() {
        let mut f = |_t: f64, y: &[f64; 1]| Ok([y[0] * y[0]]);
        let y = [1e200];
        let err = rk4_step(&mut f, 0.0, &y, 1.0).unwrap_err();
        assert!(matches!(err, SimError::NonFinite { .. }));
    }

    #[test]
    fn step_count_rejects_bad_input() {
        assert!(step_count(1.0, 0.0).is_err());
        assert!(step_count(-1.0, 0.1).is_err());
        assert_eq!(step_count(0.0, 0.1).unwrap(), 0);
        assert_eq!(step_count(100.0, 0.01).unwrap(), 10_000);
    }
}
