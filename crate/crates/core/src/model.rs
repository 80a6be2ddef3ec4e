//! Physical parameters of the reduced two-chain model and the closed-form
//! scalar functions shared by the mean-field and fluctuation equations.
//!
//! Each chain of `N_j` spins is represented by a pseudo-bosonic mode `b_j`
//! (Holstein-Primakoff, truncated at order `1/N_j`). The central spin has been
//! eliminated, leaving only the constant `<sigma_z>` and the occupation
//! dependent denominator `X`. Time is measured in units of `1/omega1`.
//!
//! The terms proportional to `R_j(t)` grow linearly in time whenever
//! `lambda != 0`. They are implemented exactly as the reduced equations state
//! them, so long `lambda != 0` runs are only as trustworthy as that secular
//! expansion.

use num_complex::Complex64;

use crate::error::{Result, SimError};

/// Physical constants of the reduced model.
///
/// `omega0` (the central-spin frequency) is carried for completeness only. It
/// drops out of the effective dynamics once the central spin is eliminated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub g1: f64,
    pub g2: f64,
    pub omega1: f64,
    pub omega2: f64,
    /// Inter-spin weight factor, in `[0, 1]`.
    pub lambda: f64,
    pub n1: u32,
    pub n2: u32,
    /// `<sigma_z>` of the central spin.
    pub sigma_z: f64,
    pub gamma_l: f64,
    pub gamma_nl: f64,
    /// Mean thermal occupation of the common bath.
    pub n_m: f64,
    pub omega0: f64,
}

impl ModelParams {
    /// Parameters shared by every panel of the limit-cycle figure, with
    /// `lambda = 0` and `N1 = N2 = 5`.
    pub fn reference() -> Self {
        ModelParams {
            g1: 1.5,
            g2: 2.4,
            omega1: 1.0,
            omega2: 0.8,
            lambda: 0.0,
            n1: 5,
            n2: 5,
            sigma_z: -0.1,
            gamma_l: 0.001,
            gamma_nl: 0.002,
            n_m: 0.0,
            omega0: 1.0,
        }
    }

    pub fn derive(&self) -> DerivedConstants {
        derive_constants(self)
    }

    pub fn validate(&self) -> Vec<Violation> {
        validate_params(self)
    }
}

impl Default for ModelParams {
    fn default() -> Self {
        Self::reference()
    }
}

/// Constants fixed by the parameters alone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedConstants {
    pub b1: f64,
    pub b2: f64,
    /// Detuning of the rotating frame, `(omega2/2) B2 - (omega1/2) B1`.
    pub theta: f64,
}

fn b_factor(lambda: f64, n: u32) -> f64 {
    let n = f64::from(n);
    lambda * lambda * (1.0 - 1.0 / (2.0 * n)) + 1.0 / n
}

pub fn derive_constants(params: &ModelParams) -> DerivedConstants {
    let b1 = b_factor(params.lambda, params.n1);
    let b2 = b_factor(params.lambda, params.n2);
    let theta = 0.5 * params.omega2 * b2 - 0.5 * params.omega1 * b1;
    DerivedConstants { b1, b2, theta }
}

/// A single violated parameter bound.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: &'static str,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

pub fn validate_params(params: &ModelParams) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |field: &'static str, message: &str| {
        out.push(Violation {
            field,
            message: message.to_string(),
        })
    };

    let finite = [
        ("g1", params.g1),
        ("g2", params.g2),
        ("omega1", params.omega1),
        ("omega2", params.omega2),
        ("lambda", params.lambda),
        ("sigma_z", params.sigma_z),
        ("gamma_l", params.gamma_l),
        ("gamma_nl", params.gamma_nl),
        ("n_m", params.n_m),
        ("omega0", params.omega0),
    ];
    for (field, value) in finite {
        if !value.is_finite() {
            push(field, "must be finite");
        }
    }

    if !(0.0..=1.0).contains(&params.lambda) {
        push("lambda", "lambda out of [0,1]");
    }
    if params.n1 < 1 {
        push("n1", "N1 must be >= 1");
    }
    if params.n2 < 1 {
        push("n2", "N2 must be >= 1");
    }
    if params.gamma_l < 0.0 {
        push("gamma_l", "gamma_l must be >= 0");
    }
    if params.gamma_nl < 0.0 {
        push("gamma_nl", "gamma_nl must be >= 0");
    }
    if params.n_m < 0.0 {
        push("n_m", "n_m must be >= 0");
    }
    if params.sigma_z.abs() > 1.0 {
        push("sigma_z", "sigma_z out of [-1,1]");
    }
    out
}

/// Closed-form quantities attached to one oscillator at time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeScalars {
    pub beta: Complex64,
    /// `|beta|^2`.
    pub occ: f64,
    /// Spin count as a float.
    pub n: f64,
    pub g: f64,
    /// `A_j = 1 - |beta|^2 / (4 N_j)`.
    pub big_a: f64,
    /// `a_j = 1 + 2 |beta|^2`.
    pub small_a: f64,
    /// `R_j(t) = i omega_j lambda^2 t / (2 N_j)`, purely imaginary.
    pub r: Complex64,
    /// `exp(+R_j a_j)`.
    pub ep: Complex64,
    /// `exp(-R_j a_j)`.
    pub em: Complex64,
    /// Noise amplitude `U_j`.
    pub u: Complex64,
    /// Diffusion weight `V_j = |U_j|^2 (n_m + 1/2)`.
    pub v: f64,
}

/// All scalar functions evaluated at one `(t, beta1, beta2)` point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarKit {
    pub t: f64,
    pub m1: ModeScalars,
    pub m2: ModeScalars,
    /// Occupation-dependent denominator of the effective coupling.
    pub x: f64,
}

impl ScalarKit {
    /// `i <sigma_z> / X`, the prefactor of every coherent interaction term.
    pub fn coupling_prefactor(&self, sigma_z: f64) -> Complex64 {
        Complex64::new(0.0, sigma_z / self.x)
    }

    pub fn modes(&self) -> (&ModeScalars, &ModeScalars) {
        (&self.m1, &self.m2)
    }
}

pub const DEFAULT_X_EPS: f64 = 1e-9;

/// `R_j(t)` for one chain.
pub fn secular_rate(omega: f64, lambda: f64, n: u32, t: f64) -> Complex64 {
    Complex64::new(0.0, omega * lambda * lambda * t / (2.0 * f64::from(n)))
}

/// `X = sum_j g_j (|beta_j|^2 - N_j) / sqrt(N_j)`.
pub fn coupling_denominator(params: &ModelParams, beta1: Complex64, beta2: Complex64) -> f64 {
    let term = |g: f64, n: u32, beta: Complex64| {
        let n = f64::from(n);
        g * (beta.norm_sqr() - n) / n.sqrt()
    };
    term(params.g1, params.n1, beta1) + term(params.g2, params.n2, beta2)
}

/// `U_j = sqrt(gamma_l) + sqrt(gamma_nl) (2|beta|^2 - beta^2) / N_j`.
pub fn noise_amplitude(params: &ModelParams, n: u32, beta: Complex64) -> Complex64 {
    let nonlinear = (2.0 * beta.norm_sqr() - beta * beta) * (params.gamma_nl.sqrt() / f64::from(n));
    params.gamma_l.sqrt() + nonlinear
}

fn mode_scalars(
    params: &ModelParams,
    omega: f64,
    g: f64,
    n: u32,
    t: f64,
    beta: Complex64,
) -> ModeScalars {
    let occ = beta.norm_sqr();
    let nf = f64::from(n);
    let r = secular_rate(omega, params.lambda, n, t);
    let small_a = 1.0 + 2.0 * occ;
    let phase = r.im * small_a;
    let ep = Complex64::from_polar(1.0, phase);
    let u = noise_amplitude(params, n, beta);
    ModeScalars {
        beta,
        occ,
        n: nf,
        g,
        big_a: 1.0 - occ / (4.0 * nf),
        small_a,
        r,
        ep,
        em: ep.conj(),
        u,
        v: u.norm_sqr() * (params.n_m + 0.5),
    }
}

/// Evaluates every shared scalar at `(t, beta1, beta2)`.
///
/// Fails with [`SimError::SingularCoupling`] when `|X| < x_eps`.
pub fn scalar_kit_eval(
    params: &ModelParams,
    t: f64,
    beta1: Complex64,
    beta2: Complex64,
    x_eps: f64,
) -> Result<ScalarKit> {
    let x = coupling_denominator(params, beta1, beta2);
    if x.is_nan() || x.abs() < x_eps {
        return Err(SimError::SingularCoupling { t, x, beta1, beta2 });
    }
    Ok(ScalarKit {
        t,
        m1: mode_scalars(params, params.omega1, params.g1, params.n1, t, beta1),
        m2: mode_scalars(params, params.omega2, params.g2, params.n2, t, beta2),
        x,
    })
}

/// Returns the first oscillator whose occupation reaches `hp_fraction * 2 N_j`.
pub fn hp_check(
    params: &ModelParams,
    t: f64,
    beta1: Complex64,
    beta2: Complex64,
    hp_fraction: f64,
) -> Result<()> {
    for (idx, (beta, n)) in [(beta1, params.n1), (beta2, params.n2)]
        .into_iter()
        .enumerate()
    {
        let limit = hp_fraction * 2.0 * f64::from(n);
        let occupation = beta.norm_sqr();
        if occupation >= limit {
            return Err(SimError::HpBreakdown {
                t,
                oscillator: idx + 1,
                occupation,
                limit,
            });
        }
    }
    Ok(())
}
