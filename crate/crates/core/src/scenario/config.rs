//! Run configuration, presets and the flat `key = value` file format.
//!
//! A configuration file is TOML restricted to top-level scalar keys. Every key
//! is optional and overrides the corresponding field of a base configuration
//! (the defaults, or a preset). Unknown keys are rejected.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::fluctuation::CovarianceState;
use crate::meanfield::{FTermMode, HpPolicy, MeanFieldState};
use crate::model::{ModelParams, DEFAULT_X_EPS};

/// Initial covariance of the quadrature fluctuations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CovInit {
    /// `C(0) = I/2`.
    #[default]
    Vacuum,
    /// `C(0) = (n_m + 1/2) I`.
    Thermal,
}

impl CovInit {
    pub fn as_str(self) -> &'static str {
        match self {
            CovInit::Vacuum => "vacuum",
            CovInit::Thermal => "thermal",
        }
    }

    pub fn state(self, t: f64, n_m: f64) -> CovarianceState {
        match self {
            CovInit::Vacuum => CovarianceState::vacuum(t),
            CovInit::Thermal => CovarianceState::thermal(t, n_m),
        }
    }
}

impl FromStr for CovInit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "vacuum" => Ok(CovInit::Vacuum),
            "thermal" => Ok(CovInit::Thermal),
            other => Err(format!(
                "unknown cov_init '{other}' (expected vacuum or thermal)"
            )),
        }
    }
}

/// Everything needed to reproduce one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: String,
    pub params: ModelParams,
    pub f_mode: FTermMode,
    pub strict_paper: bool,
    pub dt: f64,
    pub horizon: f64,
    /// Emit every `stride`-th integration step.
    pub stride: u64,
    pub cov_init: CovInit,
    /// Trailing fraction of the run used for averages and phase extraction.
    pub avg_window: f64,
    pub beta1: Complex64,
    pub beta2: Complex64,
    pub out_dir: PathBuf,
    pub hp_policy: HpPolicy,
    pub hp_fraction: f64,
    pub x_eps: f64,
    pub psd_tol: f64,
    /// Smallest-eigenvalue check every this many steps (0 checks only the
    /// first and last step).
    pub eig_stride: u64,
    /// Fixed phase offset for `Sq_phi`; extracted from the orbits when unset.
    pub phi_override: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scenario: "custom".into(),
            params: ModelParams::reference(),
            f_mode: FTermMode::MeanField,
            strict_paper: false,
            dt: 0.01,
            horizon: 1.0e4,
            stride: 10,
            cov_init: CovInit::Vacuum,
            avg_window: 0.2,
            beta1: Complex64::new(0.0, 0.0),
            beta2: Complex64::new(0.0, 0.0),
            out_dir: PathBuf::from("out"),
            hp_policy: HpPolicy::Warn,
            hp_fraction: 1.0,
            x_eps: DEFAULT_X_EPS,
            psd_tol: 1e-9,
            eig_stride: 100,
            phi_override: None,
        }
    }
}

/// Names accepted by [`preset`].
pub const PRESETS: [&str; 5] = ["fig2a", "fig2d", "fig2g", "fig3a", "fig3b"];

/// Phase offset quoted for the `lambda = 0.2` limit cycles.
pub const REPORTED_PHI: f64 = 1.049;

/// Thermal occupations of the standard sweep.
pub const SWEEP_NM: [f64; 5] = [0.0, 0.5, 1.0, 2.0, 4.0];

/// Figure presets. All share the reference couplings, frequencies and
/// damping rates and differ in `lambda`, `N1` and the phase offset.
pub fn preset(name: &str) -> Option<RunConfig> {
    let base = |lambda: f64, n1: u32, phi: Option<f64>| RunConfig {
        scenario: name.to_string(),
        params: ModelParams {
            lambda,
            n1,
            ..ModelParams::reference()
        },
        phi_override: phi,
        ..RunConfig::default()
    };
    match name {
        "fig2a" => Some(base(0.0, 5, None)),
        "fig2d" => Some(base(0.0, 10, None)),
        "fig2g" => Some(base(0.2, 5, None)),
        "fig3a" | "fig3b" => Some(base(0.2, 5, Some(REPORTED_PHI))),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

/// On-disk form: every key optional, unknown keys rejected.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    scenario: Option<String>,
    g1: Option<f64>,
    g2: Option<f64>,
    omega1: Option<f64>,
    omega2: Option<f64>,
    lambda: Option<f64>,
    n1: Option<u32>,
    n2: Option<u32>,
    sigma_z: Option<f64>,
    gamma_l: Option<f64>,
    gamma_nl: Option<f64>,
    n_m: Option<f64>,
    omega0: Option<f64>,
    f_mode: Option<String>,
    strict_paper: Option<bool>,
    dt: Option<f64>,
    horizon: Option<f64>,
    stride: Option<u64>,
    cov_init: Option<String>,
    avg_window: Option<f64>,
    beta1_re: Option<f64>,
    beta1_im: Option<f64>,
    beta2_re: Option<f64>,
    beta2_im: Option<f64>,
    out_dir: Option<String>,
    hp_policy: Option<String>,
    hp_fraction: Option<f64>,
    x_eps: Option<f64>,
    psd_tol: Option<f64>,
    eig_stride: Option<u64>,
    phi_override: Option<f64>,
}

fn parse_enum<T: FromStr<Err = String>>(
    v: Option<String>,
    into: &mut T,
) -> Result<(), ConfigError> {
    if let Some(s) = v {
        *into = s.parse().map_err(ConfigError)?;
    }
    Ok(())
}

fn set<T>(v: Option<T>, into: &mut T) {
    if let Some(v) = v {
        *into = v;
    }
}

impl RunConfig {
    /// Applies the keys of `text` on top of `base`.
    pub fn from_toml_str(text: &str, base: &RunConfig) -> Result<RunConfig, ConfigError> {
        let file: ConfigFile =
            toml::from_str(text).map_err(|e| ConfigError(format!("config parse error: {e}")))?;
        let mut c = base.clone();
        let p = &mut c.params;
        set(file.scenario, &mut c.scenario);
        set(file.g1, &mut p.g1);
        set(file.g2, &mut p.g2);
        set(file.omega1, &mut p.omega1);
        set(file.omega2, &mut p.omega2);
        set(file.lambda, &mut p.lambda);
        set(file.n1, &mut p.n1);
        set(file.n2, &mut p.n2);
        set(file.sigma_z, &mut p.sigma_z);
        set(file.gamma_l, &mut p.gamma_l);
        set(file.gamma_nl, &mut p.gamma_nl);
        set(file.n_m, &mut p.n_m);
        set(file.omega0, &mut p.omega0);
        parse_enum(file.f_mode, &mut c.f_mode)?;
        set(file.strict_paper, &mut c.strict_paper);
        set(file.dt, &mut c.dt);
        set(file.horizon, &mut c.horizon);
        set(file.stride, &mut c.stride);
        parse_enum(file.cov_init, &mut c.cov_init)?;
        set(file.avg_window, &mut c.avg_window);
        set(file.beta1_re, &mut c.beta1.re);
        set(file.beta1_im, &mut c.beta1.im);
        set(file.beta2_re, &mut c.beta2.re);
        set(file.beta2_im, &mut c.beta2.im);
        if let Some(dir) = file.out_dir {
            c.out_dir = PathBuf::from(dir);
        }
        parse_enum(file.hp_policy, &mut c.hp_policy)?;
        set(file.hp_fraction, &mut c.hp_fraction);
        set(file.x_eps, &mut c.x_eps);
        set(file.psd_tol, &mut c.psd_tol);
        set(file.eig_stride, &mut c.eig_stride);
        if file.phi_override.is_some() {
            c.phi_override = file.phi_override;
        }
        Ok(c)
    }

    /// Serializes every field. An unset `phi_override` is omitted.
    pub fn to_toml_string(&self) -> String {
        let p = &self.params;
        let file = ConfigFile {
            scenario: Some(self.scenario.clone()),
            g1: Some(p.g1),
            g2: Some(p.g2),
            omega1: Some(p.omega1),
            omega2: Some(p.omega2),
            lambda: Some(p.lambda),
            n1: Some(p.n1),
            n2: Some(p.n2),
            sigma_z: Some(p.sigma_z),
            gamma_l: Some(p.gamma_l),
            gamma_nl: Some(p.gamma_nl),
            n_m: Some(p.n_m),
            omega0: Some(p.omega0),
            f_mode: Some(self.f_mode.as_str().into()),
            strict_paper: Some(self.strict_paper),
            dt: Some(self.dt),
            horizon: Some(self.horizon),
            stride: Some(self.stride),
            cov_init: Some(self.cov_init.as_str().into()),
            avg_window: Some(self.avg_window),
            beta1_re: Some(self.beta1.re),
            beta1_im: Some(self.beta1.im),
            beta2_re: Some(self.beta2.re),
            beta2_im: Some(self.beta2.im),
            out_dir: Some(self.out_dir.to_string_lossy().into_owned()),
            hp_policy: Some(self.hp_policy.as_str().into()),
            hp_fraction: Some(self.hp_fraction),
            x_eps: Some(self.x_eps),
            psd_tol: Some(self.psd_tol),
            eig_stride: Some(self.eig_stride),
            phi_override: self.phi_override,
        };
        toml::to_string(&file).expect("flat config always serializes")
    }

    pub fn load(path: &std::path::Path, base: &RunConfig) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text, base)
    }

    pub fn initial_state(&self) -> MeanFieldState {
        MeanFieldState {
            t: 0.0,
            beta1: self.beta1,
            beta2: self.beta2,
        }
    }

    /// Every violated bound, parameters first.
    pub fn validate(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .params
            .validate()
            .iter()
            .map(|v| v.to_string())
            .collect();
        let mut check = |ok: bool, msg: &str| {
            if !ok {
                out.push(msg.to_string());
            }
        };
        check(self.dt > 0.0 && self.dt.is_finite(), "dt: must be > 0");
        check(
            self.horizon >= 0.0 && self.horizon.is_finite(),
            "horizon: must be >= 0",
        );
        check(self.stride >= 1, "stride: must be >= 1");
        check(
            self.avg_window > 0.0 && self.avg_window <= 1.0,
            "avg_window: must be in (0, 1]",
        );
        check(
            self.hp_fraction > 0.0 && self.hp_fraction.is_finite(),
            "hp_fraction: must be > 0",
        );
        check(
            self.x_eps >= 0.0 && self.x_eps.is_finite(),
            "x_eps: must be >= 0",
        );
        check(self.psd_tol >= 0.0, "psd_tol: must be >= 0");
        let betas = [self.beta1.re, self.beta1.im, self.beta2.re, self.beta2.im];
        check(
            betas.iter().all(|b| b.is_finite()),
            "beta: initial amplitudes must be finite",
        );
        if let Some(phi) = self.phi_override {
            check(phi.is_finite(), "phi_override: must be finite");
        }
        check(!self.scenario.is_empty(), "scenario: must not be empty");
        out
    }
}
