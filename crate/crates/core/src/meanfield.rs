//! Rotating-frame mean-field amplitudes `beta1`, `beta2`: drift, long-horizon
//! integration and limit-cycle summaries.

use num_complex::Complex64;
use std::f64::consts::{PI, SQRT_2};

use crate::error::{Result, SimError};
use crate::fluctuation::{drive_terms, Oscillator};
use crate::integrator::{rk4_step, step_count};
use crate::model::{
    coupling_denominator, hp_check, scalar_kit_eval, DerivedConstants, ModeScalars, ModelParams,
    ScalarKit, DEFAULT_X_EPS,
};

/// Mean-field amplitudes at time `t` (units of `1/omega1`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanFieldState {
    pub t: f64,
    pub beta1: Complex64,
    pub beta2: Complex64,
}

impl MeanFieldState {
    pub fn origin() -> Self {
        MeanFieldState {
            t: 0.0,
            beta1: Complex64::new(0.0, 0.0),
            beta2: Complex64::new(0.0, 0.0),
        }
    }

    /// Mean quadratures `(q1, p1, q2, p2)`, with `q = sqrt2 Re(beta)` and
    /// `p = sqrt2 Im(beta)`.
    pub fn quadratures(&self) -> [f64; 4] {
        [
            SQRT_2 * self.beta1.re,
            SQRT_2 * self.beta1.im,
            SQRT_2 * self.beta2.re,
            SQRT_2 * self.beta2.im,
        ]
    }
}

/// Where the c-number drive terms `F1`, `F2` are routed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FTermMode {
    /// Added to the mean-field drift, dropped from the fluctuations.
    #[default]
    MeanField,
    /// Dropped everywhere.
    Neglect,
    /// Added to the fluctuation equations only.
    Fluctuations,
}

impl FTermMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FTermMode::MeanField => "mean_field",
            FTermMode::Neglect => "neglect",
            FTermMode::Fluctuations => "fluctuations",
        }
    }
}

impl std::str::FromStr for FTermMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "mean_field" => Ok(FTermMode::MeanField),
            "neglect" => Ok(FTermMode::Neglect),
            "fluctuations" => Ok(FTermMode::Fluctuations),
            other => Err(format!(
                "unknown f_mode '{other}' (expected mean_field, neglect or fluctuations)"
            )),
        }
    }
}

/// What to do when an occupation leaves the Holstein-Primakoff range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HpPolicy {
    #[default]
    Warn,
    Abort,
}

impl HpPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            HpPolicy::Warn => "warn",
            HpPolicy::Abort => "abort",
        }
    }
}

impl std::str::FromStr for HpPolicy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "warn" => Ok(HpPolicy::Warn),
            "abort" => Ok(HpPolicy::Abort),
            other => Err(format!(
                "unknown hp_policy '{other}' (expected warn or abort)"
            )),
        }
    }
}

/// Equation variant shared by the drift and the fluctuation coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftOptions {
    pub f_mode: FTermMode,
    /// Use the equations exactly as printed, including the inconsistent
    /// terms that are otherwise corrected.
    pub strict_paper: bool,
    /// `|X|` below this is reported as a singular coupling.
    pub x_eps: f64,
}

impl Default for DriftOptions {
    fn default() -> Self {
        DriftOptions {
            f_mode: FTermMode::MeanField,
            strict_paper: false,
            x_eps: DEFAULT_X_EPS,
        }
    }
}

/// Coherent and dissipative drift of one amplitude, without the drive.
fn oscillator_drift(
    own: &ModeScalars,
    other: &ModeScalars,
    which: Oscillator,
    theta: f64,
    params: &ModelParams,
    pref: Complex64,
    strict: bool,
) -> Complex64 {
    let i = Complex64::i();
    let n = own.n;
    let b = own.beta;
    let occ = own.occ;
    let gnl = params.gamma_nl;
    let root = (params.gamma_l * params.gamma_nl).sqrt();
    let printed_second = strict && which == Oscillator::Second;

    // As printed, the second equation's cross-damping term carries only b2^+
    // and its self-interaction multiplies b1.
    let cross_damping = if printed_second {
        -2.0 / n * root * b.conj()
    } else {
        -2.0 / n * root * occ * b
    };
    let self_target = if printed_second { other.beta } else { b };

    let local = i * (which.frame_sign() * theta) * b
        - 0.5 * params.gamma_l * b
        - gnl / (n * n) * occ * occ * b
        - 2.0 * gnl / (n * n) * occ * b
        + cross_damping;

    let gs = own.g * own.g;
    let self_term = gs * (occ / n - 3.0 * occ * occ / (16.0 * n * n) - 1.0) * self_target;

    let gg = own.g * other.g;
    let r = own.r;
    let ao = own.big_a;
    let exchange_in = gg
        * other.beta.conj()
        * other.em
        * own.ep
        * other.big_a
        * (b * b / (4.0 * n) - 2.0 * r * ao * b * b);
    let exchange_out = gg
        * other.big_a
        * other.ep
        * own.em
        * other.beta
        * (occ * b / (4.0 * n) + 2.0 * r * ao * occ - ao);

    local + pref * (self_term + exchange_in + exchange_out)
}

/// Drift evaluated on a precomputed scalar kit. `drive`, when given, must be
/// `(F1, F2)` at the same point; otherwise it is computed when needed.
pub(crate) fn drift_from_kit(
    kit: &ScalarKit,
    params: &ModelParams,
    derived: &DerivedConstants,
    opts: &DriftOptions,
    drive: Option<(Complex64, Complex64)>,
) -> (Complex64, Complex64) {
    let pref = kit.coupling_prefactor(params.sigma_z);
    let (m1, m2) = kit.modes();
    let th = derived.theta;
    let mut d1 = oscillator_drift(
        m1,
        m2,
        Oscillator::First,
        th,
        params,
        pref,
        opts.strict_paper,
    );
    let mut d2 = oscillator_drift(
        m2,
        m1,
        Oscillator::Second,
        th,
        params,
        pref,
        opts.strict_paper,
    );
    if opts.f_mode == FTermMode::MeanField {
        let (f1, f2) = drive.unwrap_or_else(|| drive_terms(kit, params, opts.strict_paper));
        d1 += f1;
        d2 += f2;
    }
    (d1, d2)
}

/// Right-hand sides `(d beta1/dt, d beta2/dt)`.
pub fn mean_field_drift(
    state: &MeanFieldState,
    params: &ModelParams,
    derived: &DerivedConstants,
    opts: &DriftOptions,
) -> Result<(Complex64, Complex64)> {
    let kit = scalar_kit_eval(params, state.t, state.beta1, state.beta2, opts.x_eps)?;
    let (d1, d2) = drift_from_kit(&kit, params, derived, opts, None);
    for (k, d) in [d1, d2].into_iter().enumerate() {
        if !(d.re.is_finite() && d.im.is_finite()) {
            return Err(SimError::NonFinite {
                t: state.t,
                what: format!("mean-field drift of oscillator {}", k + 1),
            });
        }
    }
    Ok((d1, d2))
}

/// The same drift with `lambda = 0` substituted by hand: every secular
/// exponential is one and every `R_j` term vanishes. Corrected equations only.
///
/// Kept as an independent route for cross-checking [`mean_field_drift`].
pub fn lambda_zero_drift(
    state: &MeanFieldState,
    params: &ModelParams,
    f_mode: FTermMode,
) -> Result<(Complex64, Complex64)> {
    let i = Complex64::i();
    let (b1, b2) = (state.beta1, state.beta2);
    let (n1, n2) = (f64::from(params.n1), f64::from(params.n2));
    let (g1, g2) = (params.g1, params.g2);
    let (o1, o2) = (b1.norm_sqr(), b2.norm_sqr());
    let (big1, big2) = (1.0 - o1 / (4.0 * n1), 1.0 - o2 / (4.0 * n2));
    let x = g1 * (o1 - n1) / n1.sqrt() + g2 * (o2 - n2) / n2.sqrt();
    if x.abs() < DEFAULT_X_EPS {
        return Err(SimError::SingularCoupling {
            t: state.t,
            x,
            beta1: b1,
            beta2: b2,
        });
    }
    let theta = 0.5 * params.omega2 / n2 - 0.5 * params.omega1 / n1;
    let gl = params.gamma_l;
    let gnl = params.gamma_nl;
    let root = (gl * gnl).sqrt();
    let k = i * params.sigma_z / x;

    let mut d1 = i * theta * b1
        - gl / 2.0 * b1
        - gnl * o1 * o1 * b1 / (n1 * n1)
        - 2.0 * gnl * o1 * b1 / (n1 * n1)
        - 2.0 * root * o1 * b1 / n1
        + k * (g1 * g1 * o1 * b1 / n1
            - 3.0 * g1 * g1 * o1 * o1 * b1 / (16.0 * n1 * n1)
            - g1 * g1 * b1
            + g1 * g2 * big2 * b2.conj() * b1 * b1 / (4.0 * n1)
            + g1 * g2 * big2 * b2 * (o1 * b1 / (4.0 * n1) - big1));
    let mut d2 = -i * theta * b2
        - gl / 2.0 * b2
        - gnl * o2 * o2 * b2 / (n2 * n2)
        - 2.0 * gnl * o2 * b2 / (n2 * n2)
        - 2.0 * root * o2 * b2 / n2
        + k * (g2 * g2 * o2 * b2 / n2
            - 3.0 * g2 * g2 * o2 * o2 * b2 / (16.0 * n2 * n2)
            - g2 * g2 * b2
            + g1 * g2 * big1 * b1.conj() * b2 * b2 / (4.0 * n2)
            + g1 * g2 * big1 * b1 * (o2 * b2 / (4.0 * n2) - big2));

    if f_mode == FTermMode::MeanField {
        d1 += k
            * g1
            * (-2.0 * big1 * b1 + 1.5 * b1 * o1 / n1 - 2.0 * b1
                + b1 * b1 * b2.conj() * (3.0 * big2 + 1.0) / (2.0 * n1)
                + (2.5 * o1 / n1 - 12.0 * big1 - 1.0)
                + 2.0 * b2 * (o1 / (4.0 * n1) - big1));
        d2 += k
            * g2
            * (-2.0 * big2 * b2 + 1.5 * b2 * o2 / n2 - 2.0 * b2
                + b2 * b2 * b1.conj() * (3.0 * big1 + 1.0) / (2.0 * n2)
                + (2.5 * o2 / n2 - 12.0 * big2 - 1.0)
                + 2.0 * b1 * (o2 / (4.0 * n2) - big2));
    }
    Ok((d1, d2))
}

/// Result of [`integrate_mean_field`]. On failure `states` holds every state
/// emitted before the abort, so the last entry is the last valid one.
#[derive(Debug, Clone, Default)]
pub struct MeanFieldRun {
    pub states: Vec<MeanFieldState>,
    pub warnings: Vec<SimError>,
    pub failure: Option<SimError>,
    /// Number of steps across which `X` changed sign.
    pub x_crossings: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationOptions {
    pub drift: DriftOptions,
    pub output_stride: u64,
    pub hp_policy: HpPolicy,
    pub hp_fraction: f64,
}

impl Default for IntegrationOptions {
    fn default() -> Self {
        IntegrationOptions {
            drift: DriftOptions::default(),
            output_stride: 10,
            hp_policy: HpPolicy::Warn,
            hp_fraction: 1.0,
        }
    }
}

fn pack(s: &MeanFieldState) -> [f64; 4] {
    [s.beta1.re, s.beta1.im, s.beta2.re, s.beta2.im]
}

fn unpack(t: f64, y: &[f64; 4]) -> MeanFieldState {
    MeanFieldState {
        t,
        beta1: Complex64::new(y[0], y[1]),
        beta2: Complex64::new(y[2], y[3]),
    }
}

/// Fixed-step RK4 integration of the mean-field amplitudes.
pub fn integrate_mean_field(
    initial: &MeanFieldState,
    params: &ModelParams,
    horizon: f64,
    dt: f64,
    opts: &IntegrationOptions,
) -> Result<MeanFieldRun> {
    let steps = step_count(horizon, dt)?;
    if opts.output_stride == 0 {
        return Err(SimError::InvalidArgument(
            "output stride must be >= 1".into(),
        ));
    }
    let derived = params.derive();
    let t0 = initial.t;
    let mut rhs = |t: f64, y: &[f64; 4]| -> Result<[f64; 4]> {
        let (d1, d2) = mean_field_drift(&unpack(t, y), params, &derived, &opts.drift)?;
        Ok([d1.re, d1.im, d2.re, d2.im])
    };

    let mut run = MeanFieldRun {
        states: vec![*initial],
        ..MeanFieldRun::default()
    };
    let mut monitor = StepMonitor::new(params, initial, opts.hp_policy, opts.hp_fraction);
    let mut y = pack(initial);
    for k in 0..steps {
        let t = t0 + k as f64 * dt;
        y = match rk4_step(&mut rhs, t, &y, dt) {
            Ok(next) => next,
            Err(e) => {
                run.failure = Some(e);
                run.x_crossings = monitor.crossings;
                return Ok(run);
            }
        };
        let state = unpack(t0 + (k + 1) as f64 * dt, &y);
        let observed = monitor.observe(params, &state, &mut run.warnings);
        if let Err(e) = observed {
            run.states.push(state);
            run.failure = Some(e);
            run.x_crossings = monitor.crossings;
            return Ok(run);
        }
        if (k + 1) % opts.output_stride == 0 || k + 1 == steps {
            run.states.push(state);
        }
    }
    run.x_crossings = monitor.crossings;
    Ok(run)
}

/// Per-step diagnostics shared by the mean-field and joint integrators:
/// Holstein-Primakoff validity and sign changes of `X` between grid points.
pub(crate) struct StepMonitor {
    policy: HpPolicy,
    hp_fraction: f64,
    hp_warned: [bool; 2],
    last_t: f64,
    last_x: f64,
    pub(crate) crossings: u64,
}

impl StepMonitor {
    pub(crate) fn new(
        params: &ModelParams,
        initial: &MeanFieldState,
        policy: HpPolicy,
        hp_fraction: f64,
    ) -> Self {
        StepMonitor {
            policy,
            hp_fraction,
            hp_warned: [false; 2],
            last_t: initial.t,
            last_x: coupling_denominator(params, initial.beta1, initial.beta2),
            crossings: 0,
        }
    }

    /// Records warnings for `state`; fails only when the HP policy aborts.
    pub(crate) fn observe(
        &mut self,
        params: &ModelParams,
        state: &MeanFieldState,
        warnings: &mut Vec<SimError>,
    ) -> Result<()> {
        let x = coupling_denominator(params, state.beta1, state.beta2);
        if x.signum() != self.last_x.signum() {
            if self.crossings == 0 {
                warnings.push(SimError::CouplingSignChange {
                    t_before: self.last_t,
                    t_after: state.t,
                    x_before: self.last_x,
                    x_after: x,
                });
            }
            self.crossings += 1;
        }
        self.last_x = x;
        self.last_t = state.t;

        if let Err(e) = hp_check(params, state.t, state.beta1, state.beta2, self.hp_fraction) {
            match self.policy {
                HpPolicy::Abort => return Err(e),
                HpPolicy::Warn => {
                    if let SimError::HpBreakdown { oscillator, .. } = e {
                        if !self.hp_warned[oscillator - 1] {
                            self.hp_warned[oscillator - 1] = true;
                            warnings.push(e);
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Summary of one oscillator's orbit in the `(q, p)` plane over a window.
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitSummary {
    /// RMS radius.
    pub amplitude: f64,
    /// Mean spacing between alternate zero crossings of `q`; `None` when fewer
    /// than three crossings fall inside the window.
    pub period: Option<f64>,
    pub times: Vec<f64>,
    /// Unwrapped `atan2(p, q)`.
    pub phase: Vec<f64>,
}

/// Unwraps a sequence of angles so consecutive values differ by less than pi.
pub fn unwrap_phase(raw: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    let mut offset = 0.0;
    let mut prev: Option<f64> = None;
    for a in raw {
        if let Some(p) = prev {
            let mut d = a - p;
            while d > PI {
                offset -= 2.0 * PI;
                d -= 2.0 * PI;
            }
            while d < -PI {
                offset += 2.0 * PI;
                d += 2.0 * PI;
            }
        }
        prev = Some(a);
        out.push(a + offset);
    }
    out
}

/// Orbit summary from `(t, q, p)` samples.
pub fn orbit_summary(t: &[f64], q: &[f64], p: &[f64]) -> Result<OrbitSummary> {
    if t.is_empty() {
        return Err(SimError::EmptyWindow);
    }
    let n = t.len() as f64;
    let amplitude = (q.iter().zip(p).map(|(a, b)| a * a + b * b).sum::<f64>() / n).sqrt();
    if amplitude.is_nan() || amplitude < 1e-9 {
        return Err(SimError::DegenerateOrbit { radius: amplitude });
    }

    let mut crossings = Vec::new();
    for k in 1..q.len() {
        let (a, b) = (q[k - 1], q[k]);
        if (a < 0.0 && b >= 0.0) || (a > 0.0 && b <= 0.0) {
            if a == b {
                continue;
            }
            let frac = a / (a - b);
            crossings.push(t[k - 1] + frac * (t[k] - t[k - 1]));
        }
    }
    let period = if crossings.len() >= 3 {
        let span = crossings[crossings.len() - 1] - crossings[0];
        Some(2.0 * span / (crossings.len() - 1) as f64)
    } else {
        None
    };
    let phase = unwrap_phase(q.iter().zip(p).map(|(a, b)| b.atan2(*a)));
    Ok(OrbitSummary {
        amplitude,
        period,
        times: t.to_vec(),
        phase,
    })
}

/// Per-oscillator orbit summaries over the window `[t_a, t_b]`.
pub fn limit_cycle_extract(
    traj: &[MeanFieldState],
    window: (f64, f64),
) -> Result<[OrbitSummary; 2]> {
    let (ta, tb) = window;
    let inside: Vec<&MeanFieldState> = traj.iter().filter(|s| s.t >= ta && s.t <= tb).collect();
    if inside.is_empty() {
        return Err(SimError::EmptyWindow);
    }
    let t: Vec<f64> = inside.iter().map(|s| s.t).collect();
    let quads: Vec<[f64; 4]> = inside.iter().map(|s| s.quadratures()).collect();
    let col = |k: usize| quads.iter().map(|v| v[k]).collect::<Vec<_>>();
    Ok([
        orbit_summary(&t, &col(0), &col(1))?,
        orbit_summary(&t, &col(2), &col(3))?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn at(beta1: Complex64, beta2: Complex64) -> MeanFieldState {
        MeanFieldState {
            t: 0.0,
            beta1,
            beta2,
        }
    }

    fn neglect() -> DriftOptions {
        DriftOptions {
            f_mode: FTermMode::Neglect,
            ..DriftOptions::default()
        }
    }

    #[test]
    fn origin_is_fixed_without_drive() {
        for lambda in [0.0, 0.2] {
            let p = ModelParams {
                lambda,
                ..ModelParams::reference()
            };
            let mut s = MeanFieldState::origin();
            s.t = 321.0;
            let (d1, d2) = mean_field_drift(&s, &p, &p.derive(), &neglect()).unwrap();
            assert_eq!(d1, c(0.0, 0.0));
            assert_eq!(d2, c(0.0, 0.0));
        }
    }

    #[test]
    fn drive_at_origin() {
        let p = ModelParams::reference();
        let (d1, d2) = mean_field_drift(
            &MeanFieldState::origin(),
            &p,
            &p.derive(),
            &DriftOptions::default(),
        )
        .unwrap();
        let x = -3.9 * 5f64.sqrt();
        let oracle = |g: f64| c(0.0, -13.0 * g * p.sigma_z / x);
        assert!((d1 - oracle(p.g1)).norm() < 1e-12);
        assert!((d2 - oracle(p.g2)).norm() < 1e-12);
        assert!((d1.im + 0.2236).abs() < 1e-4);
    }

    #[test]
    fn zero_sigma_z_decouples() {
        let p = ModelParams {
            sigma_z: 0.0,
            lambda: 0.2,
            ..ModelParams::reference()
        };
        let d = p.derive();
        let b1 = c(0.5, 1.2);
        let b2 = c(-0.3, 0.4);
        let (d1, _) = mean_field_drift(&at(b1, b2), &p, &d, &neglect()).unwrap();
        let o = b1.norm_sqr();
        let root = (p.gamma_l * p.gamma_nl).sqrt();
        let expected = c(0.0, d.theta) * b1
            - 0.5 * p.gamma_l * b1
            - p.gamma_nl / 25.0 * o * o * b1
            - 2.0 * p.gamma_nl / 25.0 * o * b1
            - 2.0 / 5.0 * root * o * b1;
        assert!((d1 - expected).norm() < 1e-15);
    }

    #[test]
    fn symmetric_parameters_give_equal_drifts() {
        let p = ModelParams {
            g1: 1.5,
            g2: 1.5,
            omega2: 1.0,
            lambda: 0.2,
            ..ModelParams::reference()
        };
        let b = c(0.7, -0.4);
        let mut s = at(b, b);
        s.t = 55.0;
        let (d1, d2) = mean_field_drift(&s, &p, &p.derive(), &DriftOptions::default()).unwrap();
        assert_eq!(d1, d2);
    }

    #[test]
    fn strict_mode_breaks_exchange_symmetry() {
        let p = ModelParams {
            g2: 1.5,
            omega2: 1.0,
            ..ModelParams::reference()
        };
        let b = c(0.7, -0.4);
        let strict = DriftOptions {
            strict_paper: true,
            ..DriftOptions::default()
        };
        let (d1, d2) = mean_field_drift(&at(b, b), &p, &p.derive(), &strict).unwrap();
        assert!((d1 - d2).norm() > 1e-6);
    }

    #[test]
    fn lambda_zero_route_matches() {
        let p = ModelParams::reference();
        let s = MeanFieldState {
            t: 40.0,
            beta1: c(0.9, -0.1),
            beta2: c(-0.4, 1.3),
        };
        for mode in [FTermMode::MeanField, FTermMode::Neglect] {
            let opts = DriftOptions {
                f_mode: mode,
                ..DriftOptions::default()
            };
            let full = mean_field_drift(&s, &p, &p.derive(), &opts).unwrap();
            let hand = lambda_zero_drift(&s, &p, mode).unwrap();
            assert!((full.0 - hand.0).norm() < 1e-12);
            assert!((full.1 - hand.1).norm() < 1e-12);
        }
    }

    #[test]
    fn linear_damping_decay() {
        let p = ModelParams {
            sigma_z: 0.0,
            gamma_nl: 0.0,
            ..ModelParams::reference()
        };
        let init = at(c(1.0, 0.0), c(1.0, 0.0));
        let opts = IntegrationOptions {
            drift: neglect(),
            output_stride: 100,
            ..IntegrationOptions::default()
        };
        let run = integrate_mean_field(&init, &p, 100.0, 0.01, &opts).unwrap();
        assert!(run.failure.is_none());
        let last = run.states.last().unwrap();
        assert!((last.t - 100.0).abs() < 1e-9);
        let expected = (-p.gamma_l * 100.0 / 2.0).exp();
        assert!((last.beta1.norm() - expected).abs() < 1e-6);
        assert!((last.beta2.norm() - expected).abs() < 1e-6);
    }

    #[test]
    fn output_stride_and_endpoint() {
        let p = ModelParams::reference();
        let opts = IntegrationOptions {
            output_stride: 7,
            ..IntegrationOptions::default()
        };
        let run = integrate_mean_field(&MeanFieldState::origin(), &p, 1.0, 0.01, &opts).unwrap();
        let ts: Vec<f64> = run.states.iter().map(|s| s.t).collect();
        assert_eq!(ts[0], 0.0);
        assert!((ts[1] - 0.07).abs() < 1e-12);
        assert!((ts.last().unwrap() - 1.0).abs() < 1e-12);
        assert!(ts.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn hp_abort_keeps_partial_data() {
        let p = ModelParams {
            sigma_z: 0.0,
            ..ModelParams::reference()
        };
        let opts = IntegrationOptions {
            hp_policy: HpPolicy::Abort,
            drift: neglect(),
            ..IntegrationOptions::default()
        };
        let init = at(c(4.0, 0.0), c(0.0, 0.0));
        let run = integrate_mean_field(&init, &p, 1.0, 0.01, &opts).unwrap();
        assert!(matches!(
            run.failure,
            Some(SimError::HpBreakdown { oscillator: 1, .. })
        ));
        assert_eq!(run.states.len(), 2);

        let warn = IntegrationOptions {
            hp_policy: HpPolicy::Warn,
            ..opts
        };
        let run = integrate_mean_field(&init, &p, 1.0, 0.01, &warn).unwrap();
        assert!(run.failure.is_none());
        assert_eq!(run.warnings.len(), 1);
    }

    #[test]
    fn coupling_sign_change_is_counted() {
        let p = ModelParams::reference();
        let run = integrate_mean_field(
            &MeanFieldState::origin(),
            &p,
            10.0,
            0.01,
            &IntegrationOptions::default(),
        )
        .unwrap();
        assert!(run.x_crossings >= 1);
        let first = run
            .warnings
            .iter()
            .filter(|w| matches!(w, SimError::CouplingSignChange { .. }))
            .count();
        assert_eq!(first, 1);
        if let Some(SimError::CouplingSignChange {
            x_before, x_after, ..
        }) = run.warnings.first()
        {
            assert!(x_before * x_after < 0.0);
        }

        let quiet = IntegrationOptions {
            drift: neglect(),
            ..IntegrationOptions::default()
        };
        let run =
            integrate_mean_field(&at(c(0.5, 0.1), c(0.2, -0.3)), &p, 10.0, 0.01, &quiet).unwrap();
        assert_eq!(run.x_crossings, 0);
        assert!(run.warnings.is_empty());
    }

    #[test]
    fn circular_orbit_summary() {
        let dt = 0.001;
        let t: Vec<f64> = (0..=20_000).map(|k| k as f64 * dt).collect();
        let q: Vec<f64> = t.iter().map(|x| x.cos()).collect();
        let p: Vec<f64> = t.iter().map(|x| x.sin()).collect();
        let s = orbit_summary(&t, &q, &p).unwrap();
        assert!((s.amplitude - 1.0).abs() < 1e-12);
        assert!((s.period.unwrap() - 2.0 * PI).abs() < 1e-6);
        for (ti, phi) in t.iter().zip(&s.phase) {
            assert!((ti - phi).abs() < 1e-9);
        }
    }

    #[test]
    fn degenerate_orbit() {
        let t = [0.0, 1.0, 2.0];
        let z = [0.0; 3];
        assert!(matches!(
            orbit_summary(&t, &z, &z),
            Err(SimError::DegenerateOrbit { .. })
        ));
    }

    #[test]
    fn quarter_rotation_phase_offset() {
        let traj: Vec<MeanFieldState> = (0..2000)
            .map(|k| {
                let t = k as f64 * 0.01;
                let b = Complex64::from_polar(1.0 + 0.1 * t.sin(), 0.7 * t);
                MeanFieldState {
                    t,
                    beta1: b,
                    beta2: Complex64::i() * b,
                }
            })
            .collect();
        let [o1, o2] = limit_cycle_extract(&traj, (0.0, 19.99)).unwrap();
        for (a, b) in o1.phase.iter().zip(&o2.phase) {
            assert!((b - a - PI / 2.0).abs() < 1e-12);
        }
    }
}
