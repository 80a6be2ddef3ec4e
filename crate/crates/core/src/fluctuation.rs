//! Linearized fluctuation dynamics around the mean-field trajectory.
//!
//! The complex fluctuation equations
//!
//! ```text
//! d(db1)/dt = E1 db1 + E2 db1^+ + E3 db2 + E4 db2^+ + U1 b_in1 + F1
//! d(db2)/dt = E5 db1 + E6 db1^+ + E7 db2 + E8 db2^+ + U2 b_in2 + F2
//! ```
//!
//! are rewritten for the quadratures `Y = (dq1, dp1, dq2, dp2)` with
//! `db_j = (dq_j + i dp_j) / sqrt(2)`, giving a real drift matrix `M(t)`. The
//! symmetrized covariance `C` then obeys `dC/dt = M C + C M^T + D`.

use nalgebra::{Matrix4, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Result, SimError};
use crate::integrator::{rk4_step, step_count};
use crate::meanfield::{
    drift_from_kit, DriftOptions, FTermMode, HpPolicy, MeanFieldState, StepMonitor,
};
use crate::model::{scalar_kit_eval, DerivedConstants, ModeScalars, ModelParams, ScalarKit};

/// Which oscillator plays the "own" role in a per-oscillator expression.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Oscillator {
    First,
    Second,
}

impl Oscillator {
    /// Sign of the rotating-frame detuning term.
    pub(crate) fn frame_sign(self) -> f64 {
        match self {
            Oscillator::First => 1.0,
            Oscillator::Second => -1.0,
        }
    }
}

fn inv(n: f64) -> f64 {
    1.0 / n
}

/// Self-interaction weight in `E1/E2/E7/E8`: `g_j^2`, or `g_j` as printed.
fn self_weight(own: &ModeScalars, strict: bool) -> f64 {
    if strict {
        own.g
    } else {
        own.g * own.g
    }
}

fn self_bracket(own: &ModeScalars) -> f64 {
    let n = own.n;
    1.5 * own.occ / n - 9.0 * own.occ * own.occ / (16.0 * n * n) - 1.0
}

/// `E1` (own = 1) or `E7` (own = 2).
fn e_self(
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
    let occ = own.occ;
    let r = own.r;
    let aa = own.big_a;
    let gg = own.g * other.g;
    let root = (params.gamma_l * params.gamma_nl).sqrt();

    let damping = i * (which.frame_sign() * theta)
        - 0.5 * params.gamma_l
        - 3.0 * inv(n) * params.gamma_nl * occ * occ
        - 4.0 * inv(n * n) * params.gamma_nl * occ
        - 4.0 * inv(n) * root * occ;

    let first = gg
        * other.big_a
        * own.beta
        * other.beta.conj()
        * other.em
        * (own.ep / (2.0 * n) + r * own.beta.conj() / (2.0 * n) + r * occ * own.ep / (2.0 * n)
            - 4.0 * r * r * aa * occ
            - 4.0 * r * aa * own.ep);

    // The first oscillator's coefficient is printed as 1/N1, the second as 1/(2 N2).
    let lead = if strict && which == Oscillator::First {
        1.0 / n
    } else {
        1.0 / (2.0 * n)
    };
    let second = gg
        * other.big_a
        * own.beta.conj()
        * other.beta
        * other.ep
        * (-r * occ / (2.0 * n) + lead * own.em - 4.0 * r * r * occ * aa
            + 2.0 * r * own.em * aa
            + 2.0 * r * aa
            - r * own.em * occ / (2.0 * n));

    damping + pref * (self_weight(own, strict) * self_bracket(own) + first + second)
}

/// `E2` (own = 1) or `E8` (own = 2), the coefficient of `db_own^+`.
fn e_self_conj(
    own: &ModeScalars,
    other: &ModeScalars,
    params: &ModelParams,
    pref: Complex64,
    strict: bool,
) -> Complex64 {
    let n = own.n;
    let occ = own.occ;
    let r = own.r;
    let aa = own.big_a;
    let b = own.beta;
    let b2 = b * b;
    let gg = own.g * other.g;
    let root = (params.gamma_l * params.gamma_nl).sqrt();

    let damping = -2.0 * inv(n * n) * params.gamma_nl * occ * b2
        - 2.0 * inv(n * n) * params.gamma_nl * b2
        - 2.0 * inv(n) * root * b2;

    let first = gg
        * r
        * other.big_a
        * b2
        * other.beta.conj()
        * other.em
        * (1.0 / (2.0 * n) + b / (2.0 * n) * own.ep - 4.0 * r * aa * b);

    let second = gg
        * other.big_a
        * b
        * other.beta
        * other.ep
        * (own.em / (2.0 * n) - r * occ / (2.0 * n) + 2.0 * r * aa * own.em
            - 4.0 * aa * r * r * occ
            - r * occ / (2.0 * n) * own.em
            + 2.0 * r * aa);

    damping + pref * (self_weight(own, strict) * self_bracket(own) + first + second)
}

/// `|b_o|^2/(4 N_o) + 2 R_o A_o |b_o|^2 - A_o`, shared by the cross terms.
fn cross_tail(own: &ModeScalars) -> Complex64 {
    own.occ / (4.0 * own.n) + 2.0 * own.r * own.big_a * own.occ - own.big_a
}

/// `E3` (own = 1) or `E5` (own = 2), the coefficient of `db_other`.
fn e_cross(own: &ModeScalars, other: &ModeScalars, pref: Complex64) -> Complex64 {
    let gg = own.g * other.g;
    let bo2 = own.beta * own.beta;
    let bx2c = other.beta.conj() * other.beta.conj();
    let first = bo2
        * bx2c
        * own.ep
        * (2.0 * other.r * other.big_a + other.em / (4.0 * other.n))
        * (2.0 * own.r * own.big_a - 1.0 / (4.0 * own.n));
    let second = own.em
        * (2.0 * other.big_a * other.r * other.occ - other.ep * other.occ / (4.0 * other.n)
            + other.big_a * other.ep)
        * cross_tail(own);
    pref * gg * (first + second)
}

/// `E4` (own = 1) or `E6` (own = 2), the coefficient of `db_other^+`.
fn e_cross_conj(own: &ModeScalars, other: &ModeScalars, pref: Complex64) -> Complex64 {
    let gg = own.g * other.g;
    let first = own.ep
        * own.beta
        * own.beta
        * (-2.0 * other.r * other.big_a * other.occ + other.big_a * other.em
            - other.em * other.occ / (4.0 * other.n))
        * (1.0 / (4.0 * own.n) - 2.0 * own.r * own.big_a);
    let second = own.em
        * other.beta
        * other.beta
        * (2.0 * other.r * other.big_a - other.ep / (4.0 * other.n))
        * cross_tail(own);
    pref * gg * (first + second)
}

/// The c-number drive `F1` (own = 1) or `F2` (own = 2).
///
/// `F2` is printed with the prefactor `g1`; outside strict mode it uses `g2`,
/// mirroring `F1`.
fn drive(
    own: &ModeScalars,
    other: &ModeScalars,
    which: Oscillator,
    sigma_z_over_x: f64,
    g1: f64,
    strict: bool,
) -> Complex64 {
    let g = if strict && which == Oscillator::Second {
        g1
    } else {
        own.g
    };
    let pref = Complex64::new(0.0, g * sigma_z_over_x);
    let n = own.n;
    let occ = own.occ;
    let r = own.r;
    let ao = own.big_a;
    let ax = other.big_a;
    let b = own.beta;

    let local = -2.0 * ao * b + 3.0 * b * occ / (2.0 * n) - 2.0 * b;
    let forward = b
        * b
        * other.beta.conj()
        * own.ep
        * other.em
        * ((3.0 * ax + 1.0) / (2.0 * n) - 4.0 * r * (ao + ax) - 10.0 * r * ao * ax);
    let backward = other.ep
        * own.em
        * ((5.0 * occ / (2.0 * n) + 20.0 * occ * r * ao + 4.0 * occ * r - 12.0 * ao - 1.0)
            + 2.0 * other.beta * (occ / (4.0 * n) + 4.0 * occ * r * ao - ao));
    pref * (local + forward + backward)
}

/// Complex coefficients of the linearized fluctuation equations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluctCoeffs {
    /// `E1..E8` in order.
    pub e: [Complex64; 8],
    pub f1: Complex64,
    pub f2: Complex64,
    pub u1: Complex64,
    pub u2: Complex64,
}

/// Evaluates `E1..E8`, `F1`, `F2`, `U1`, `U2` on a precomputed scalar kit.
pub fn coeffs_from_kit(
    kit: &ScalarKit,
    params: &ModelParams,
    derived: &DerivedConstants,
    strict_paper: bool,
) -> FluctCoeffs {
    let pref = kit.coupling_prefactor(params.sigma_z);
    let (m1, m2) = kit.modes();
    let th = derived.theta;
    let e = [
        e_self(m1, m2, Oscillator::First, th, params, pref, strict_paper),
        e_self_conj(m1, m2, params, pref, strict_paper),
        e_cross(m1, m2, pref),
        e_cross_conj(m1, m2, pref),
        e_cross(m2, m1, pref),
        e_cross_conj(m2, m1, pref),
        e_self(m2, m1, Oscillator::Second, th, params, pref, strict_paper),
        e_self_conj(m2, m1, params, pref, strict_paper),
    ];
    let (f1, f2) = drive_terms(kit, params, strict_paper);
    FluctCoeffs {
        e,
        f1,
        f2,
        u1: m1.u,
        u2: m2.u,
    }
}

pub(crate) fn drive_terms(
    kit: &ScalarKit,
    params: &ModelParams,
    strict: bool,
) -> (Complex64, Complex64) {
    let s = params.sigma_z / kit.x;
    (
        drive(&kit.m1, &kit.m2, Oscillator::First, s, params.g1, strict),
        drive(&kit.m2, &kit.m1, Oscillator::Second, s, params.g1, strict),
    )
}

/// Coefficients at a mean-field state, with term-level non-finite diagnostics.
pub fn fluct_coeffs(
    state: &MeanFieldState,
    params: &ModelParams,
    derived: &DerivedConstants,
    opts: &DriftOptions,
) -> Result<FluctCoeffs> {
    let kit = scalar_kit_eval(params, state.t, state.beta1, state.beta2, opts.x_eps)?;
    let c = coeffs_from_kit(&kit, params, derived, opts.strict_paper);
    check_coeffs(&c, state.t)?;
    Ok(c)
}

fn check_coeffs(c: &FluctCoeffs, t: f64) -> Result<()> {
    let named =
        c.e.iter()
            .enumerate()
            .map(|(k, v)| (format!("E{}", k + 1), *v))
            .chain([
                ("F1".to_string(), c.f1),
                ("F2".to_string(), c.f2),
                ("U1".to_string(), c.u1),
                ("U2".to_string(), c.u2),
            ]);
    for (name, v) in named {
        if !(v.re.is_finite() && v.im.is_finite()) {
            return Err(SimError::NonFinite {
                t,
                what: format!("coefficient {name}"),
            });
        }
    }
    Ok(())
}

/// Real quadrature form of the complex coefficients `E1..E8`.
///
/// Each oscillator row pair follows from `db = (dq + i dp)/sqrt(2)`:
/// `dq' = Re(Ea+Eb) dq - Im(Ea-Eb) dp`, `dp' = Im(Ea+Eb) dq + Re(Ea-Eb) dp`.
pub fn assemble_drift_matrix(e: &[Complex64; 8]) -> Matrix4<f64> {
    let mut m = Matrix4::zeros();
    for (row, coeffs) in [(0usize, &e[0..4]), (2usize, &e[4..8])] {
        for (col, pair) in [(0usize, &coeffs[0..2]), (2usize, &coeffs[2..4])] {
            let sum = pair[0] + pair[1];
            let diff = pair[0] - pair[1];
            m[(row, col)] = sum.re;
            m[(row, col + 1)] = -diff.im;
            m[(row + 1, col)] = sum.im;
            m[(row + 1, col + 1)] = diff.re;
        }
    }
    m
}

/// `D = diag(V1, V1, V2, V2)` with `V_j = |U_j|^2 (n_m + 1/2)`.
pub fn diffusion_matrix(u1: Complex64, u2: Complex64, n_m: f64) -> Matrix4<f64> {
    let w = n_m + 0.5;
    let v1 = u1.norm_sqr() * w;
    let v2 = u2.norm_sqr() * w;
    Matrix4::from_diagonal(&nalgebra::Vector4::new(v1, v1, v2, v2))
}

/// Quadrature image of the c-number drive `(F1, F2)`.
pub fn drive_quadratures(f1: Complex64, f2: Complex64) -> [f64; 4] {
    let s = std::f64::consts::SQRT_2;
    [s * f1.re, s * f1.im, s * f2.re, s * f2.im]
}

/// Everything needed to advance the covariance at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftAssembly {
    pub coeffs: FluctCoeffs,
    pub m: Matrix4<f64>,
    pub d: Matrix4<f64>,
}

impl DriftAssembly {
    pub fn new(coeffs: FluctCoeffs, n_m: f64) -> Self {
        DriftAssembly {
            m: assemble_drift_matrix(&coeffs.e),
            d: diffusion_matrix(coeffs.u1, coeffs.u2, n_m),
            coeffs,
        }
    }
}

/// Symmetric quadrature covariance at time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceState {
    pub t: f64,
    pub c: Matrix4<f64>,
}

impl CovarianceState {
    /// Vacuum start, `C = I / 2`.
    pub fn vacuum(t: f64) -> Self {
        Self::thermal(t, 0.0)
    }

    /// Thermal start, `C = (n_m + 1/2) I`.
    pub fn thermal(t: f64, n_m: f64) -> Self {
        CovarianceState {
            t,
            c: Matrix4::identity() * (n_m + 0.5),
        }
    }

    /// The ten independent entries in row-major upper-triangular order
    /// `C11 C12 C13 C14 C22 C23 C24 C33 C34 C44`.
    pub fn upper(&self) -> [f64; 10] {
        pack_upper(&self.c)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.c)
    }

    /// Determinant of each single-mode 2x2 block (`>= 1/4` for physical states).
    pub fn mode_determinants(&self) -> [f64; 2] {
        let c = &self.c;
        [
            c[(0, 0)] * c[(1, 1)] - c[(0, 1)] * c[(1, 0)],
            c[(2, 2)] * c[(3, 3)] - c[(2, 3)] * c[(3, 2)],
        ]
    }
}

pub(crate) const UPPER_INDEX: [(usize, usize); 10] = [
    (0, 0),
    (0, 1),
    (0, 2),
    (0, 3),
    (1, 1),
    (1, 2),
    (1, 3),
    (2, 2),
    (2, 3),
    (3, 3),
];

pub(crate) fn pack_upper(c: &Matrix4<f64>) -> [f64; 10] {
    let mut out = [0.0; 10];
    for (k, &(i, j)) in UPPER_INDEX.iter().enumerate() {
        out[k] = c[(i, j)];
    }
    out
}

pub(crate) fn unpack_upper(v: &[f64]) -> Matrix4<f64> {
    let mut c = Matrix4::zeros();
    for (k, &(i, j)) in UPPER_INDEX.iter().enumerate() {
        c[(i, j)] = v[k];
        c[(j, i)] = v[k];
    }
    c
}

pub fn min_eigenvalue(c: &Matrix4<f64>) -> f64 {
    SymmetricEigen::new(*c)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Right-hand side of the Lyapunov equation.
pub fn lyapunov_rhs(m: &Matrix4<f64>, c: &Matrix4<f64>, d: &Matrix4<f64>) -> Matrix4<f64> {
    m * c + c * m.transpose() + d
}

/// Controls shared by the co-integrated mean-field and covariance run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationOptions {
    pub drift: DriftOptions,
    pub hp_policy: HpPolicy,
    pub hp_fraction: f64,
    pub psd_tol: f64,
    /// Check the smallest eigenvalue every this many steps (0 disables).
    pub eig_stride: u64,
    /// Emit every this many steps.
    pub output_stride: u64,
}

impl Default for PropagationOptions {
    fn default() -> Self {
        PropagationOptions {
            drift: DriftOptions::default(),
            hp_policy: HpPolicy::Warn,
            hp_fraction: 1.0,
            psd_tol: 1e-9,
            eig_stride: 100,
            output_stride: 10,
        }
    }
}

/// One emitted point of a co-integrated run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointSample {
    pub mean: MeanFieldState,
    pub cov: CovarianceState,
    /// Mean of the quadrature fluctuations (non-zero only when the drive is
    /// routed into the fluctuation equations).
    pub offset: [f64; 4],
}

/// Output of [`propagate_covariance`]. `failure` holds the error that stopped
/// the run early; `samples` always holds everything emitted before it.
#[derive(Debug, Clone, Default)]
pub struct JointRun {
    pub samples: Vec<JointSample>,
    pub warnings: Vec<SimError>,
    pub failure: Option<SimError>,
    /// Smallest eigenvalue seen at any check.
    pub min_eigenvalue: f64,
    /// Smallest single-mode determinant seen at any check.
    pub min_mode_determinant: f64,
    /// Completed integration steps.
    pub steps: u64,
    /// Number of steps across which `X` changed sign.
    pub x_crossings: u64,
}

const JOINT: usize = 18;

fn pack_joint(mean: &MeanFieldState, offset: &[f64; 4], c: &Matrix4<f64>) -> [f64; JOINT] {
    let mut y = [0.0; JOINT];
    y[0] = mean.beta1.re;
    y[1] = mean.beta1.im;
    y[2] = mean.beta2.re;
    y[3] = mean.beta2.im;
    y[4..8].copy_from_slice(offset);
    y[8..18].copy_from_slice(&pack_upper(c));
    y
}

fn unpack_joint(t: f64, y: &[f64; JOINT]) -> JointSample {
    let mut offset = [0.0; 4];
    offset.copy_from_slice(&y[4..8]);
    JointSample {
        mean: MeanFieldState {
            t,
            beta1: Complex64::new(y[0], y[1]),
            beta2: Complex64::new(y[2], y[3]),
        },
        cov: CovarianceState {
            t,
            c: unpack_upper(&y[8..18]),
        },
        offset,
    }
}

/// Right-hand side of the combined `(beta1, beta2, <Y>, C)` system.
fn joint_rhs(
    t: f64,
    y: &[f64; JOINT],
    params: &ModelParams,
    derived: &DerivedConstants,
    opts: &DriftOptions,
) -> Result<[f64; JOINT]> {
    let b1 = Complex64::new(y[0], y[1]);
    let b2 = Complex64::new(y[2], y[3]);
    let kit = scalar_kit_eval(params, t, b1, b2, opts.x_eps)?;
    let coeffs = coeffs_from_kit(&kit, params, derived, opts.strict_paper);
    check_coeffs(&coeffs, t)?;
    let (d1, d2) = drift_from_kit(&kit, params, derived, opts, Some((coeffs.f1, coeffs.f2)));

    let asm = DriftAssembly::new(coeffs, params.n_m);
    let m = &asm.m;
    let c = unpack_upper(&y[8..18]);

    let mut out = [0.0; JOINT];
    out[0] = d1.re;
    out[1] = d1.im;
    out[2] = d2.re;
    out[3] = d2.im;

    let mut cdot = lyapunov_rhs(m, &c, &asm.d);
    if opts.f_mode == FTermMode::Fluctuations {
        // <Y> is driven by F; C holds raw second moments, so the drive also
        // enters through f <Y>^T + <Y> f^T.
        let mu = nalgebra::Vector4::new(y[4], y[5], y[6], y[7]);
        let f = nalgebra::Vector4::from(drive_quadratures(coeffs.f1, coeffs.f2));
        let mudot = m * mu + f;
        out[4..8].copy_from_slice(mudot.as_slice());
        cdot += f * mu.transpose() + mu * f.transpose();
    }
    out[8..18].copy_from_slice(&pack_upper(&cdot));
    Ok(out)
}

/// Advances `(beta1, beta2, C)` together on one fixed grid.
///
/// `C` is symmetrized after every step and its smallest eigenvalue is checked
/// every `eig_stride` steps.
pub fn propagate_covariance(
    initial: &MeanFieldState,
    c0: &CovarianceState,
    params: &ModelParams,
    horizon: f64,
    dt: f64,
    opts: &PropagationOptions,
) -> Result<JointRun> {
    let steps = step_count(horizon, dt)?;
    if opts.output_stride == 0 {
        return Err(SimError::InvalidArgument(
            "output stride must be >= 1".into(),
        ));
    }
    let derived = params.derive();
    let drift = opts.drift;
    let t0 = initial.t;

    let mut run = JointRun {
        min_eigenvalue: f64::INFINITY,
        min_mode_determinant: f64::INFINITY,
        ..JointRun::default()
    };
    let mut monitor = StepMonitor::new(params, initial, opts.hp_policy, opts.hp_fraction);

    let mut y = pack_joint(initial, &[0.0; 4], &c0.c);
    let mut rhs = |t: f64, y: &[f64; JOINT]| joint_rhs(t, y, params, &derived, &drift);

    let record =
        |run: &mut JointRun, k: u64, y: &[f64; JOINT], monitor: &mut StepMonitor| -> Result<()> {
            let t = t0 + k as f64 * dt;
            let sample = unpack_joint(t, y);
            let check =
                k == 0 || k == steps || (opts.eig_stride > 0 && k.is_multiple_of(opts.eig_stride));
            if check {
                let lam = sample.cov.min_eigenvalue();
                run.min_eigenvalue = run.min_eigenvalue.min(lam);
                let dets = sample.cov.mode_determinants();
                run.min_mode_determinant = run.min_mode_determinant.min(dets[0].min(dets[1]));
                if lam < -opts.psd_tol {
                    run.samples.push(sample);
                    return Err(SimError::PsdViolation {
                        t,
                        min_eigenvalue: lam,
                    });
                }
            }
            if k > 0 {
                if let Err(e) = monitor.observe(params, &sample.mean, &mut run.warnings) {
                    run.samples.push(sample);
                    return Err(e);
                }
            }
            if k.is_multiple_of(opts.output_stride) || k == steps {
                run.samples.push(sample);
            }
            Ok(())
        };

    let finish = |mut run: JointRun, steps: u64, failure: Option<SimError>, crossings: u64| {
        run.failure = failure;
        run.steps = steps;
        run.x_crossings = crossings;
        run
    };
    if let Err(e) = record(&mut run, 0, &y, &mut monitor) {
        return Ok(finish(run, 0, Some(e), 0));
    }
    for k in 0..steps {
        let t = t0 + k as f64 * dt;
        match rk4_step(&mut rhs, t, &y, dt) {
            Ok(mut next) => {
                symmetrize_packed(&mut next);
                y = next;
            }
            Err(e) => {
                let crossings = monitor.crossings;
                return Ok(finish(run, k, Some(e), crossings));
            }
        }
        if let Err(e) = record(&mut run, k + 1, &y, &mut monitor) {
            let crossings = monitor.crossings;
            return Ok(finish(run, k + 1, Some(e), crossings));
        }
    }
    let crossings = monitor.crossings;
    Ok(finish(run, steps, None, crossings))
}

/// The packed upper triangle is symmetric by construction; this only
/// re-derives it through a full matrix so that emitted `C` equals `C^T`.
fn symmetrize_packed(y: &mut [f64; JOINT]) {
    let c = unpack_upper(&y[8..18]);
    let sym = (c + c.transpose()) * 0.5;
    y[8..18].copy_from_slice(&pack_upper(&sym));
}

/// Propagates `C` under externally supplied `M(t)` and `D(t)` with the same
/// scheme, symmetrization and eigenvalue monitoring as the full run.
pub fn propagate_lyapunov<FM>(
    c0: &Matrix4<f64>,
    mut drift: FM,
    t0: f64,
    horizon: f64,
    dt: f64,
    psd_tol: f64,
) -> Result<Vec<CovarianceState>>
where
    FM: FnMut(f64) -> (Matrix4<f64>, Matrix4<f64>),
{
    let steps = step_count(horizon, dt)?;
    let mut y = [0.0; 10];
    y.copy_from_slice(&pack_upper(c0));
    let mut out = vec![CovarianceState { t: t0, c: *c0 }];
    let mut rhs = |t: f64, y: &[f64; 10]| -> Result<[f64; 10]> {
        let (m, d) = drift(t);
        Ok(pack_upper(&lyapunov_rhs(&m, &unpack_upper(y), &d)))
    };
    for k in 0..steps {
        let t = t0 + k as f64 * dt;
        y = rk4_step(&mut rhs, t, &y, dt)?;
        let c = unpack_upper(&y);
        let state = CovarianceState {
            t: t0 + (k + 1) as f64 * dt,
            c: (c + c.transpose()) * 0.5,
        };
        let lam = state.min_eigenvalue();
        if lam < -psd_tol {
            return Err(SimError::PsdViolation {
                t: state.t,
                min_eigenvalue: lam,
            });
        }
        out.push(state);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meanfield::DriftOptions;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn origin(t: f64) -> MeanFieldState {
        MeanFieldState {
            t,
            beta1: c(0.0, 0.0),
            beta2: c(0.0, 0.0),
        }
    }

    #[test]
    fn e1_at_origin_lambda_point_two() {
        let p = ModelParams {
            lambda: 0.2,
            ..ModelParams::reference()
        };
        let d = p.derive();
        let co = fluct_coeffs(&origin(0.0), &p, &d, &DriftOptions::default()).unwrap();
        let x = -3.9 * 5f64.sqrt();
        let expected = c(-0.0005, d.theta - p.sigma_z * p.g1 * p.g1 / x);
        assert!((co.e[0] - expected).norm() < 1e-15);
        assert!((co.e[0].re + 0.0005).abs() < 1e-12);
        assert!((co.e[0].im + 0.0494).abs() < 1e-4);
        assert_eq!(co.u1, c(0.001f64.sqrt(), 0.0));
        assert_eq!(co.u2, c(0.001f64.sqrt(), 0.0));
    }

    #[test]
    fn zero_sigma_z_removes_cross_coupling() {
        let p = ModelParams {
            sigma_z: 0.0,
            lambda: 0.3,
            ..ModelParams::reference()
        };
        let d = p.derive();
        let s = MeanFieldState {
            t: 17.0,
            beta1: c(0.4, -0.9),
            beta2: c(-1.1, 0.2),
        };
        let co = fluct_coeffs(&s, &p, &d, &DriftOptions::default()).unwrap();
        for k in 2..6 {
            assert_eq!(co.e[k], c(0.0, 0.0), "E{}", k + 1);
        }
        let occ = s.beta1.norm_sqr();
        let root = (p.gamma_l * p.gamma_nl).sqrt();
        let e1 = c(-0.5 * p.gamma_l, d.theta)
            - 3.0 / 5.0 * p.gamma_nl * occ * occ
            - 4.0 / 25.0 * p.gamma_nl * occ
            - 4.0 / 5.0 * root * occ;
        assert!((co.e[0] - e1).norm() < 1e-15);
    }

    #[test]
    fn strict_mode_changes_self_weight_only() {
        let p = ModelParams::reference();
        let d = p.derive();
        let loose = fluct_coeffs(&origin(0.0), &p, &d, &DriftOptions::default()).unwrap();
        let strict = fluct_coeffs(
            &origin(0.0),
            &p,
            &d,
            &DriftOptions {
                strict_paper: true,
                ..DriftOptions::default()
            },
        )
        .unwrap();
        let pref = c(0.0, p.sigma_z / (-3.9 * 5f64.sqrt()));
        assert!((loose.e[1] - (-p.g1 * p.g1) * pref).norm() < 1e-15);
        assert!((strict.e[1] - (-p.g1) * pref).norm() < 1e-15);
        assert_eq!(loose.e[2], strict.e[2]);
    }

    #[test]
    fn pure_rotation_block() {
        let mut e = [c(0.0, 0.0); 8];
        e[0] = c(0.0, 0.3);
        let m = assemble_drift_matrix(&e);
        assert_eq!(m[(0, 0)], 0.0);
        assert_eq!(m[(0, 1)], -0.3);
        assert_eq!(m[(1, 0)], 0.3);
        assert_eq!(m[(1, 1)], 0.0);
        assert_eq!(m.fixed_view::<2, 2>(2, 0).norm(), 0.0);
    }

    #[test]
    fn squeezing_block() {
        let mut e = [c(0.0, 0.0); 8];
        e[1] = c(0.25, 0.0);
        let m = assemble_drift_matrix(&e);
        assert_eq!(m[(0, 0)], 0.25);
        assert_eq!(m[(1, 1)], -0.25);
        assert_eq!(m[(0, 1)], 0.0);
        assert_eq!(m[(1, 0)], 0.0);
    }

    #[test]
    fn diffusion_examples() {
        let zero = ModelParams {
            gamma_l: 0.0,
            gamma_nl: 0.0,
            ..ModelParams::reference()
        };
        let d = zero.derive();
        let co = fluct_coeffs(&origin(0.0), &zero, &d, &DriftOptions::default()).unwrap();
        assert_eq!(diffusion_matrix(co.u1, co.u2, 3.0), Matrix4::zeros());

        let p = ModelParams::reference();
        let co = fluct_coeffs(&origin(0.0), &p, &p.derive(), &DriftOptions::default()).unwrap();
        let d0 = diffusion_matrix(co.u1, co.u2, 0.0);
        for i in 0..4 {
            assert!((d0[(i, i)] - 5e-4).abs() < 1e-18);
        }
        let b = c(0.8, -0.3);
        let u = noise_at(&p, b);
        let ratio = diffusion_matrix(u, u, 1.0)[(0, 0)] / diffusion_matrix(u, u, 0.0)[(0, 0)];
        assert!((ratio - 3.0).abs() < 1e-14);
    }

    fn noise_at(p: &ModelParams, b: Complex64) -> Complex64 {
        crate::model::noise_amplitude(p, p.n1, b)
    }

    #[test]
    fn constant_diffusion_grows_linearly() {
        let d = Matrix4::identity() * 0.3;
        let c0 = Matrix4::identity() * 0.5;
        let out = propagate_lyapunov(&c0, |_| (Matrix4::zeros(), d), 0.0, 2.0, 0.01, 1e-9).unwrap();
        let last = out.last().unwrap();
        let expected = c0 + d * 2.0;
        assert!((last.c - expected).abs().max() < 1e-13);
    }

    #[test]
    fn thermal_relaxation_fixed_point() {
        let gamma = 0.5;
        let nbar = 1.5;
        let m = Matrix4::identity() * (-gamma / 2.0);
        let d = Matrix4::identity() * (gamma * (nbar + 0.5));
        let c0 = Matrix4::identity() * 0.5;
        let out = propagate_lyapunov(&c0, |_| (m, d), 0.0, 80.0, 0.01, 1e-9).unwrap();
        let last = out.last().unwrap();
        assert!((last.c - Matrix4::identity() * (nbar + 0.5)).abs().max() < 1e-9);
    }

    #[test]
    fn pack_roundtrip() {
        let mut m = Matrix4::zeros();
        for i in 0..4 {
            for j in i..4 {
                m[(i, j)] = (i * 4 + j) as f64 + 0.5;
                m[(j, i)] = m[(i, j)];
            }
        }
        assert_eq!(unpack_upper(&pack_upper(&m)), m);
    }
}
