//! Run orchestration and file output.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::error::SimError;
use crate::fluctuation::{propagate_covariance, JointRun, PropagationOptions};
use crate::meanfield::{limit_cycle_extract, DriftOptions, MeanFieldState, OrbitSummary};
use crate::metrics::{
    classical_sync, phase_difference, quantum_sync, quantum_sync_phi, time_average, window_len,
};

use super::config::RunConfig;

pub const TRAJECTORY_HEADER: &str =
    "t,q1,p1,q2,p2,C11,C12,C13,C14,C22,C23,C24,C33,C34,C44,Sq,Sq_phi,Sc";
pub const SWEEP_HEADER: &str = "n_m,Sq_bar";

/// One emitted row of `trajectory.csv`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRecord {
    pub t: f64,
    /// Mean quadratures `q1, p1, q2, p2`.
    pub quads: [f64; 4],
    /// `C11 C12 C13 C14 C22 C23 C24 C33 C34 C44`.
    pub cov: [f64; 10],
    /// `NaN` where the bracket is not positive.
    pub sq: f64,
    pub sq_phi: f64,
    /// `None` for perfect classical synchronization.
    pub sc: Option<f64>,
}

/// Where the phase offset used for `Sq_phi` came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhiSource {
    Override,
    Extracted,
    /// Orbits unusable over the window; zero was used.
    Fallback,
}

impl PhiSource {
    pub fn as_str(self) -> &'static str {
        match self {
            PhiSource::Override => "override",
            PhiSource::Extracted => "extracted",
            PhiSource::Fallback => "fallback",
        }
    }
}

/// Late-time figures of a run. Every metric is `NaN` when the run failed.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub sq_bar: f64,
    pub sq_phi_bar: f64,
    pub phi: f64,
    pub phi_source: PhiSource,
    /// Extracted phase difference, whichever `phi` was used.
    pub phi_extracted: Option<f64>,
    /// Spread of the unwrapped phase difference over the window.
    pub phase_drift: f64,
    pub amplitude: [f64; 2],
    pub period: [Option<f64>; 2],
}

/// Everything a run produces before anything touches the disk.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub config: RunConfig,
    pub records: Vec<TrajectoryRecord>,
    pub summary: Summary,
    pub warnings: Vec<SimError>,
    pub failure: Option<SimError>,
    /// Diagnostics that did not stop the run.
    pub notes: Vec<String>,
    pub steps: u64,
    pub x_crossings: u64,
    pub min_eigenvalue: f64,
    pub min_mode_determinant: f64,
}

impl Simulation {
    pub fn succeeded(&self) -> bool {
        self.failure.is_none()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl ScenarioError {
    fn io(path: &Path, source: io::Error) -> Self {
        ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

fn propagation_options(config: &RunConfig) -> PropagationOptions {
    PropagationOptions {
        drift: DriftOptions {
            f_mode: config.f_mode,
            strict_paper: config.strict_paper,
            x_eps: config.x_eps,
        },
        hp_policy: config.hp_policy,
        hp_fraction: config.hp_fraction,
        psd_tol: config.psd_tol,
        eig_stride: config.eig_stride,
        output_stride: config.stride,
    }
}

fn mean_quads(s: &crate::fluctuation::JointSample) -> [f64; 4] {
    let q = s.mean.quadratures();
    [
        q[0] + s.offset[0],
        q[1] + s.offset[1],
        q[2] + s.offset[2],
        q[3] + s.offset[3],
    ]
}

fn window_start(len: usize, fraction: f64) -> usize {
    len - window_len(len, fraction)
}

fn orbits(run: &JointRun, fraction: f64) -> crate::Result<[OrbitSummary; 2]> {
    let n = run.samples.len();
    if n == 0 {
        return Err(SimError::EmptyWindow);
    }
    let tail: Vec<MeanFieldState> = run.samples[window_start(n, fraction)..]
        .iter()
        .map(|s| {
            let q = mean_quads(s);
            let f = std::f64::consts::FRAC_1_SQRT_2;
            MeanFieldState {
                t: s.mean.t,
                beta1: num_complex::Complex64::new(f * q[0], f * q[1]),
                beta2: num_complex::Complex64::new(f * q[2], f * q[3]),
            }
        })
        .collect();
    let (ta, tb) = (tail[0].t, tail[tail.len() - 1].t);
    limit_cycle_extract(&tail, (ta, tb))
}

/// Integrates a configuration and evaluates every output quantity in memory.
pub fn simulate(config: &RunConfig) -> Result<Simulation, ScenarioError> {
    let problems = config.validate();
    if !problems.is_empty() {
        return Err(ScenarioError::Config(problems));
    }
    let c0 = config.cov_init.state(0.0, config.params.n_m);
    let opts = propagation_options(config);
    let run = propagate_covariance(
        &config.initial_state(),
        &c0,
        &config.params,
        config.horizon,
        config.dt,
        &opts,
    )
    .map_err(|e| ScenarioError::Config(vec![e.to_string()]))?;

    let mut notes = Vec::new();
    let extracted = orbits(&run, config.avg_window);
    let phi_extracted = extracted
        .as_ref()
        .ok()
        .and_then(|o| phase_difference(o).ok());
    let (phi, phi_source) = match (config.phi_override, phi_extracted) {
        (Some(phi), _) => (phi, PhiSource::Override),
        (None, Some(phi)) => (phi, PhiSource::Extracted),
        (None, None) => {
            let why = match &extracted {
                Err(e) => e.to_string(),
                Ok(_) => "no common phase samples".to_string(),
            };
            notes.push(format!("phase offset fell back to 0: {why}"));
            (0.0, PhiSource::Fallback)
        }
    };

    // A run without a time span has no dataset, only its initial condition.
    let emitted = if run.steps == 0 && run.failure.is_none() {
        &run.samples[..0]
    } else {
        &run.samples[..]
    };
    let records: Vec<TrajectoryRecord> = emitted
        .iter()
        .map(|s| {
            let quads = mean_quads(s);
            TrajectoryRecord {
                t: s.mean.t,
                quads,
                cov: s.cov.upper(),
                sq: quantum_sync(&s.cov.c).unwrap_or(f64::NAN),
                sq_phi: quantum_sync_phi(&s.cov.c, phi).unwrap_or(f64::NAN),
                sc: classical_sync(&quads).value,
            }
        })
        .collect();

    let failed = run.failure.is_some();
    let summary = if failed || records.is_empty() {
        Summary {
            sq_bar: f64::NAN,
            sq_phi_bar: f64::NAN,
            phi,
            phi_source,
            phi_extracted,
            phase_drift: f64::NAN,
            amplitude: [f64::NAN; 2],
            period: [None; 2],
        }
    } else {
        let sq: Vec<f64> = records.iter().map(|r| r.sq).collect();
        let sq_phi: Vec<f64> = records.iter().map(|r| r.sq_phi).collect();
        let (amplitude, period, phase_drift) = match &extracted {
            Ok([o1, o2]) => {
                let d: Vec<f64> = o1.phase.iter().zip(&o2.phase).map(|(a, b)| b - a).collect();
                let hi = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lo = d.iter().copied().fold(f64::INFINITY, f64::min);
                (
                    [o1.amplitude, o2.amplitude],
                    [o1.period, o2.period],
                    hi - lo,
                )
            }
            Err(_) => ([f64::NAN; 2], [None; 2], f64::NAN),
        };
        Summary {
            sq_bar: time_average(&sq, config.avg_window).unwrap_or(f64::NAN),
            sq_phi_bar: time_average(&sq_phi, config.avg_window).unwrap_or(f64::NAN),
            phi,
            phi_source,
            phi_extracted,
            phase_drift,
            amplitude,
            period,
        }
    };

    if run.x_crossings > 0 {
        notes.push(format!(
            "coupling denominator X changed sign {} time(s); the first crossing is listed under warnings",
            run.x_crossings
        ));
    }
    if run.min_mode_determinant < 0.25 {
        notes.push(format!(
            "mode determinant fell to {:e}, below the uncertainty bound 1/4",
            run.min_mode_determinant
        ));
    }

    Ok(Simulation {
        config: config.clone(),
        records,
        summary,
        warnings: run.warnings,
        failure: run.failure,
        notes,
        steps: run.steps,
        x_crossings: run.x_crossings,
        min_eigenvalue: run.min_eigenvalue,
        min_mode_determinant: run.min_mode_determinant,
    })
}

/// Full-precision rendering used in every output file.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.16e}")
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_else(|| "none".into())
}

pub fn write_trajectory(path: &Path, records: &[TrajectoryRecord]) -> io::Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "{TRAJECTORY_HEADER}")?;
    let mut line = String::with_capacity(512);
    for r in records {
        line.clear();
        line.push_str(&fmt_f64(r.t));
        for v in r.quads.iter().chain(&r.cov).chain([&r.sq, &r.sq_phi]) {
            line.push(',');
            line.push_str(&fmt_f64(*v));
        }
        line.push(',');
        match r.sc {
            Some(v) => line.push_str(&fmt_f64(v)),
            None => line.push_str("perfect"),
        }
        line.push('\n');
        w.write_all(line.as_bytes())?;
    }
    w.flush()
}

fn summary_text(sim: &Simulation) -> String {
    let s = &sim.summary;
    let mut out = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(out, "{k} = {v}");
    };
    kv("status", status(sim).into());
    kv("Sq_bar", fmt_f64(s.sq_bar));
    kv("Sq_phi_bar", fmt_f64(s.sq_phi_bar));
    kv("phi", fmt_f64(s.phi));
    kv("phi_source", s.phi_source.as_str().into());
    kv("phi_extracted", fmt_opt(s.phi_extracted));
    kv("phase_drift", fmt_f64(s.phase_drift));
    kv("amplitude1", fmt_f64(s.amplitude[0]));
    kv("amplitude2", fmt_f64(s.amplitude[1]));
    kv("period1", fmt_opt(s.period[0]));
    kv("period2", fmt_opt(s.period[1]));
    out
}

fn status(sim: &Simulation) -> &'static str {
    if sim.succeeded() {
        "ok"
    } else {
        "failed"
    }
}

fn manifest_text(sim: &Simulation, wall: f64) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# resolved configuration");
    out.push_str(&sim.config.to_toml_string());
    if sim.config.phi_override.is_none() {
        let _ = writeln!(
            out,
            "# phi_override unset: phase offset taken from the orbits"
        );
    }
    let _ = writeln!(out, "# run");
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(out, "{k} = {v}");
    };
    kv("version", env!("CARGO_PKG_VERSION").into());
    kv("wall_time_s", format!("{wall:.3}"));
    kv("status", status(sim).into());
    kv("steps_completed", sim.steps.to_string());
    kv("rows", sim.records.len().to_string());
    kv(
        "failure",
        sim.failure
            .as_ref()
            .map(|e| e.to_string())
            .unwrap_or_else(|| "none".into()),
    );
    kv(
        "failure_t",
        fmt_opt(sim.failure.as_ref().and_then(|e| e.time())),
    );
    kv("x_crossings", sim.x_crossings.to_string());
    kv("min_eigenvalue", fmt_f64(sim.min_eigenvalue));
    kv("min_mode_determinant", fmt_f64(sim.min_mode_determinant));
    for (i, w) in sim.warnings.iter().enumerate() {
        kv(&format!("warning_{}", i + 1), w.to_string());
    }
    for (i, n) in sim.notes.iter().enumerate() {
        kv(&format!("note_{}", i + 1), n.clone());
    }
    out
}

fn write_text(path: &Path, text: &str) -> Result<(), ScenarioError> {
    fs::write(path, text).map_err(|e| ScenarioError::io(path, e))
}

/// Runs one configuration and writes `trajectory.csv`, `summary.txt` and
/// `manifest.txt` into `config.out_dir`. Numerical failures are reported in
/// the returned [`Simulation`] after the partial data has been written.
pub fn run_scenario(config: &RunConfig) -> Result<Simulation, ScenarioError> {
    let start = Instant::now();
    let sim = simulate(config)?;
    let wall = start.elapsed().as_secs_f64();
    let dir = &config.out_dir;
    fs::create_dir_all(dir).map_err(|e| ScenarioError::io(dir, e))?;
    let traj = dir.join("trajectory.csv");
    write_trajectory(&traj, &sim.records).map_err(|e| ScenarioError::io(&traj, e))?;
    write_text(&dir.join("summary.txt"), &summary_text(&sim))?;
    write_text(&dir.join("manifest.txt"), &manifest_text(&sim, wall))?;
    Ok(sim)
}

/// One point of a thermal sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub n_m: f64,
    pub sq_bar: f64,
    /// Why the point is `NaN`, if it is.
    pub failure: Option<String>,
}

/// `S_q` averages for each thermal occupation, in input order.
pub fn thermal_sweep(base: &RunConfig, n_m: &[f64]) -> Result<Vec<SweepPoint>, ScenarioError> {
    let mut problems = Vec::new();
    if n_m.is_empty() {
        problems.push("n_m list must not be empty".to_string());
    }
    for v in n_m {
        if !(*v >= 0.0 && v.is_finite()) {
            problems.push(format!("n_m values must be finite and >= 0, got {v}"));
        }
    }
    if !problems.is_empty() {
        return Err(ScenarioError::Config(problems));
    }
    let configs: Vec<RunConfig> = n_m
        .iter()
        .map(|&v| {
            let mut c = base.clone();
            c.params.n_m = v;
            c
        })
        .collect();
    if let Some(problems) = configs.iter().map(|c| c.validate()).find(|p| !p.is_empty()) {
        return Err(ScenarioError::Config(problems));
    }
    configs
        .par_iter()
        .map(|c| {
            let sim = simulate(c)?;
            let failure = match (&sim.failure, sim.summary.sq_bar.is_nan()) {
                (Some(e), _) => Some(e.to_string()),
                (None, true) => Some("S_q undefined over the averaging window".into()),
                (None, false) => None,
            };
            Ok(SweepPoint {
                n_m: c.params.n_m,
                sq_bar: sim.summary.sq_bar,
                failure,
            })
        })
        .collect()
}

/// Runs [`thermal_sweep`] and writes `sweep.csv` and `manifest.txt` into
/// `out_dir`.
pub fn run_thermal_sweep(
    base: &RunConfig,
    n_m: &[f64],
    out_dir: &Path,
) -> Result<Vec<SweepPoint>, ScenarioError> {
    let start = Instant::now();
    let points = thermal_sweep(base, n_m)?;
    let wall = start.elapsed().as_secs_f64();
    fs::create_dir_all(out_dir).map_err(|e| ScenarioError::io(out_dir, e))?;

    let mut csv = format!("{SWEEP_HEADER}\n");
    for p in &points {
        let _ = writeln!(csv, "{},{}", fmt_f64(p.n_m), fmt_f64(p.sq_bar));
    }
    write_text(&out_dir.join("sweep.csv"), &csv)?;

    let mut manifest = String::from("# resolved base configuration\n");
    manifest.push_str(&base.to_toml_string());
    let _ = writeln!(manifest, "# sweep");
    let _ = writeln!(manifest, "version = {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(manifest, "wall_time_s = {wall:.3}");
    let list: Vec<String> = n_m.iter().map(|v| fmt_f64(*v)).collect();
    let _ = writeln!(manifest, "n_m_values = {}", list.join(","));
    let failed = points.iter().filter(|p| p.failure.is_some()).count();
    let _ = writeln!(manifest, "failed_points = {failed}");
    for (i, p) in points.iter().enumerate() {
        if let Some(why) = &p.failure {
            let _ = writeln!(manifest, "note_{} = n_m={}: {why}", i + 1, fmt_f64(p.n_m));
        }
    }
    write_text(&out_dir.join("manifest.txt"), &manifest)?;
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short(horizon: f64) -> RunConfig {
        RunConfig {
            horizon,
            ..RunConfig::default()
        }
    }

    #[test]
    fn formatting() {
        assert_eq!(fmt_f64(f64::NAN), "nan");
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(0.1).parse::<f64>().unwrap(), 0.1);
        assert_eq!(fmt_opt(None), "none");
    }

    #[test]
    fn zero_horizon_has_no_rows() {
        let sim = simulate(&short(0.0)).unwrap();
        assert!(sim.records.is_empty());
        assert!(sim.succeeded());
        assert!(sim.summary.sq_bar.is_nan());
    }

    #[test]
    fn first_row_is_the_initial_condition() {
        let sim = simulate(&short(1.0)).unwrap();
        assert_eq!(sim.records[0].t, 0.0);
        assert_eq!(sim.records[0].sq, 1.0);
        assert_eq!(sim.records[0].sc, None);
    }

    #[test]
    fn rows_are_strictly_increasing() {
        let sim = simulate(&short(2.0)).unwrap();
        assert_eq!(sim.records.len(), 21);
        assert!(sim.records.windows(2).all(|w| w[0].t < w[1].t));
    }

    #[test]
    fn invalid_config_is_rejected() {
        let c = RunConfig {
            dt: -1.0,
            ..RunConfig::default()
        };
        assert!(matches!(simulate(&c), Err(ScenarioError::Config(_))));
        assert!(matches!(
            thermal_sweep(&short(1.0), &[]),
            Err(ScenarioError::Config(_))
        ));
        assert!(matches!(
            thermal_sweep(&short(1.0), &[0.0, -1.0]),
            Err(ScenarioError::Config(_))
        ));
    }

    #[test]
    fn override_takes_precedence() {
        let c = RunConfig {
            phi_override: Some(0.7),
            ..short(1.0)
        };
        let sim = simulate(&c).unwrap();
        assert_eq!(sim.summary.phi, 0.7);
        assert_eq!(sim.summary.phi_source, PhiSource::Override);
    }
}
