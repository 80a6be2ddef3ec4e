use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use spinsync::scenario::{
    preset, run_scenario, run_thermal_sweep, selftest, RunConfig, ScenarioError, SelftestOptions,
    PRESETS,
};

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_SELFTEST: u8 = 4;

#[derive(Parser)]
#[command(
    name = "spinsync",
    version,
    about = "Synchronization of two pseudo-bosonic spin chains"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration and write trajectory.csv, summary.txt and manifest.txt.
    Simulate {
        /// Flat key = value configuration; keys override the preset or defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Base configuration: fig2a, fig2d, fig2g, fig3a or fig3b.
        #[arg(long)]
        preset: Option<String>,
    },
    /// S_q time averages over a list of thermal occupations, written to sweep.csv.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated thermal occupations.
        #[arg(long, value_delimiter = ',', required = true)]
        nm: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        preset: Option<String>,
    },
    /// Fast invariant checks.
    Selftest {
        /// Use the equations exactly as printed.
        #[arg(long)]
        strict_paper: bool,
    },
}

fn resolve(config: Option<&Path>, preset_name: Option<&str>) -> Result<RunConfig, String> {
    let base = match preset_name {
        Some(name) => preset(name).ok_or_else(|| {
            format!(
                "unknown preset '{name}' (expected one of {})",
                PRESETS.join(", ")
            )
        })?,
        None => RunConfig::default(),
    };
    match config {
        Some(path) => RunConfig::load(path, &base).map_err(|e| e.to_string()),
        None if preset_name.is_some() => Ok(base),
        None => Err("either --config or --preset is required".into()),
    }
}

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

fn scenario_failure(e: ScenarioError) -> ExitCode {
    match e {
        ScenarioError::Config(_) => fail(EXIT_CONFIG, e),
        ScenarioError::Io { .. } => fail(1, e),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate {
            config,
            out,
            preset,
        } => {
            let mut cfg = match resolve(config.as_deref(), preset.as_deref()) {
                Ok(c) => c,
                Err(e) => return fail(EXIT_CONFIG, e),
            };
            cfg.out_dir = out;
            let sim = match run_scenario(&cfg) {
                Ok(s) => s,
                Err(e) => return scenario_failure(e),
            };
            for w in &sim.warnings {
                eprintln!("warning: {w}");
            }
            let s = &sim.summary;
            println!("rows        {}", sim.records.len());
            println!("Sq_bar      {}", s.sq_bar);
            println!("Sq_phi_bar  {}", s.sq_phi_bar);
            println!("phi         {} ({})", s.phi, s.phi_source.as_str());
            println!("output      {}", cfg.out_dir.display());
            match sim.failure {
                None => ExitCode::SUCCESS,
                Some(e) => fail(EXIT_NUMERICAL, e),
            }
        }
        Command::Sweep {
            config,
            nm,
            out,
            preset,
        } => {
            let cfg = match resolve(config.as_deref(), preset.as_deref()) {
                Ok(c) => c,
                Err(e) => return fail(EXIT_CONFIG, e),
            };
            let points = match run_thermal_sweep(&cfg, &nm, &out) {
                Ok(p) => p,
                Err(e) => return scenario_failure(e),
            };
            println!("n_m,Sq_bar");
            for p in &points {
                println!("{},{}", p.n_m, p.sq_bar);
            }
            let failed: Vec<_> = points.iter().filter_map(|p| p.failure.as_ref()).collect();
            if failed.is_empty() {
                ExitCode::SUCCESS
            } else {
                for f in &failed {
                    eprintln!("warning: {f}");
                }
                fail(
                    EXIT_NUMERICAL,
                    format!("{} sweep point(s) failed", failed.len()),
                )
            }
        }
        Command::Selftest { strict_paper } => {
            let report = selftest(&SelftestOptions {
                strict_paper,
                ..SelftestOptions::default()
            });
            print!("{report}");
            if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_SELFTEST)
            }
        }
    }
}
