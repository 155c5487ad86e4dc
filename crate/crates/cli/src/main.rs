//! Command-line front end. Distances are in km and excess noise in
//! shot-noise units throughout.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Result};
use clap::{Args, Parser, Subcommand};

use scissor_qkd::optimizer::{
    GridConfig, RangeSettings, DEFAULT_K_MIN, DEFAULT_RESOLUTION_KM, DEFAULT_STEP,
};
use scissor_qkd::states::DEFAULT_TOL;

use commands::Outcome;
use config::ConfigFile;
use output::Format;

const EXIT_VALIDATION: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "scissor-qkd",
    version,
    about = "Key rate, range and fidelity of CV-QKD with a quantum scissor"
)]
struct Cli {
    /// `key = value` file; keys are long flag names, flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct Physical {
    /// Alice's TMSV parameter λ_A in [0, 1)
    #[arg(long)]
    lambda_a: Option<f64>,
    /// Scissor beam-splitter transmissivity t_s in (0, 1)
    #[arg(long)]
    ts: Option<f64>,
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// Channel excess noise ε (shot-noise units)
    #[arg(long)]
    eps: Option<f64>,
    /// Reconciliation efficiency β in (0, 1]
    #[arg(long)]
    beta: Option<f64>,
    /// Minimum acceptable key rate, bits per pulse [default: 1e-6]
    #[arg(long)]
    kmin: Option<f64>,
    /// Fock-series truncation tolerance [default: 1e-15]
    #[arg(long)]
    tol: Option<f64>,
    /// Output file (or directory for grid commands)
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args, Debug, Clone, Default)]
struct Grid {
    /// Grid step for λ_A and t_s [default: 0.001]
    #[arg(long)]
    step: Option<f64>,
    /// Bisection resolution in km [default: 0.01]
    #[arg(long)]
    resolution_km: Option<f64>,
    /// Worker threads [default: all cores]
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    lambda_min: Option<f64>,
    #[arg(long)]
    lambda_max: Option<f64>,
    #[arg(long)]
    ts_min: Option<f64>,
    #[arg(long)]
    ts_max: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Key rate, PLOB bound, fidelity and heralding probability versus distance
    Keyrate {
        #[command(flatten)]
        point: Physical,
        #[command(flatten)]
        common: Common,
        /// First distance in km [default: 1]
        #[arg(long)]
        l_min: Option<f64>,
        /// Last distance in km [default: 310]
        #[arg(long)]
        l_max: Option<f64>,
        /// Distance step in km [default: 1]
        #[arg(long)]
        l_step: Option<f64>,
    },
    /// Grid search for the longest range; writes grid.csv and summary.json into --out
    Optimize {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: Grid,
        /// Continue from <out>/checkpoint.json
        #[arg(long)]
        resume: bool,
    },
    /// Point sets with range above --r-min, fidelity above --f-min, and both
    Regions {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: Grid,
        /// Threshold preset: zero-noise (ε=0, 265 km, 0.94) or low-noise (ε=0.001, 110 km, 0.93)
        #[arg(long)]
        preset: Option<Preset>,
        #[arg(long)]
        r_min: Option<f64>,
        #[arg(long)]
        f_min: Option<f64>,
        /// Read a grid.csv from `optimize` instead of running the grid
        #[arg(long)]
        grid_file: Option<PathBuf>,
    },
    /// Range/fidelity table for ε ∈ {0, 0.001, 0.005, 0.01, 0.05}
    Table1 {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: Grid,
        /// Find the operating points by grid search instead of using the presets
        #[arg(long)]
        from_grid: bool,
    },
    /// Homodyne probability density of Bob's state
    Pdf {
        #[command(flatten)]
        point: Physical,
        #[command(flatten)]
        common: Common,
        /// Channel length in km
        #[arg(long)]
        distance: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        x_min: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        x_max: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
    },
    /// Compare the closed forms against the dense Fock-space simulation
    Validate {
        #[command(flatten)]
        common: Common,
        /// Battery CSV (lambda_a,lambda_e,t_c,t_s,cutoff) [default: built in]
        #[arg(long)]
        battery: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, clap::ValueEnum, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
enum Preset {
    ZeroNoise,
    LowNoise,
}

fn settings(c: &Common, g: &Grid, file: &ConfigFile, eps_default: f64) -> Result<RangeSettings> {
    Ok(RangeSettings {
        eps: file.or(c.eps, "eps", eps_default)?,
        beta: file.or(c.beta, "beta", 1.0)?,
        k_min: file.or(c.kmin, "kmin", DEFAULT_K_MIN)?,
        resolution_km: file.or(g.resolution_km, "resolution-km", DEFAULT_RESOLUTION_KM)?,
        tol: file.or(c.tol, "tol", DEFAULT_TOL)?,
    })
}

fn grid_config(settings: RangeSettings, g: &Grid, file: &ConfigFile) -> Result<GridConfig> {
    let d = GridConfig::default();
    Ok(GridConfig {
        settings,
        step: file.or(g.step, "step", DEFAULT_STEP)?,
        lambda_min: file.or(g.lambda_min, "lambda-min", d.lambda_min)?,
        lambda_max: file.or(g.lambda_max, "lambda-max", d.lambda_max)?,
        t_s_min: file.or(g.ts_min, "ts-min", d.t_s_min)?,
        t_s_max: file.or(g.ts_max, "ts-max", d.t_s_max)?,
    })
}

fn run_config(
    c: &Common,
    g: &Grid,
    file: &ConfigFile,
    grid: GridConfig,
    resume: bool,
) -> Result<commands::GridRunConfig> {
    Ok(commands::GridRunConfig {
        grid,
        workers: file.pick(g.workers, "workers")?,
        out: file.require(c.out.clone(), "out")?,
        resume,
    })
}

fn run(cli: Cli) -> Result<Outcome> {
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let format = |c: &Common| file.or(c.format, "format", Format::Csv);
    let out = |c: &Common| file.pick(c.out.clone(), "out");
    match cli.command {
        Command::Keyrate {
            point,
            common,
            l_min,
            l_max,
            l_step,
        } => {
            let cfg = commands::KeyrateConfig {
                lambda_a: file.require(point.lambda_a, "lambda-a")?,
                t_s: file.require(point.ts, "ts")?,
                eps: file.or(common.eps, "eps", 0.0)?,
                beta: file.or(common.beta, "beta", 1.0)?,
                k_min: file.or(common.kmin, "kmin", DEFAULT_K_MIN)?,
                tol: file.or(common.tol, "tol", DEFAULT_TOL)?,
                l_min: file.or(l_min, "l-min", 1.0)?,
                l_max: file.or(l_max, "l-max", 310.0)?,
                l_step: file.or(l_step, "l-step", 1.0)?,
            };
            commands::keyrate(&cfg, format(&common)?, out(&common)?.as_deref())
        }
        Command::Optimize {
            common,
            grid,
            resume,
        } => {
            let s = settings(&common, &grid, &file, 0.0)?;
            let g = grid_config(s, &grid, &file)?;
            commands::optimize(&run_config(&common, &grid, &file, g, resume)?)
        }
        Command::Regions {
            common,
            grid,
            preset,
            r_min,
            f_min,
            grid_file,
        } => {
            let (eps0, r0, f0) = match preset {
                Some(Preset::ZeroNoise) => (0.0, Some(265.0), Some(0.94)),
                Some(Preset::LowNoise) => (0.001, Some(110.0), Some(0.93)),
                None => (0.0, None, None),
            };
            let s = settings(&common, &grid, &file, eps0)?;
            let g = grid_config(s, &grid, &file)?;
            let cfg = commands::RegionsConfig {
                run: run_config(&common, &grid, &file, g, false)?,
                from_grid: file.pick(grid_file, "grid")?,
                r_min: file
                    .pick(r_min, "r-min")?
                    .or(r0)
                    .ok_or_else(|| anyhow!("missing --r-min or --preset"))?,
                f_min: file
                    .pick(f_min, "f-min")?
                    .or(f0)
                    .ok_or_else(|| anyhow!("missing --f-min or --preset"))?,
            };
            commands::regions(&cfg)
        }
        Command::Table1 {
            common,
            grid,
            from_grid,
        } => {
            if file.pick(common.beta, "beta")?.is_none() {
                return Err(anyhow!("table1 needs the calibrated --beta"));
            }
            let s = settings(&common, &grid, &file, 0.0)?;
            let cfg = commands::Table1Config {
                settings: s,
                from_grid: if from_grid {
                    Some(grid_config(s, &grid, &file)?)
                } else {
                    None
                },
                workers: file.pick(grid.workers, "workers")?,
            };
            commands::table1(&cfg, format(&common)?, out(&common)?.as_deref())
        }
        Command::Pdf {
            point,
            common,
            distance,
            x_min,
            x_max,
            points,
        } => {
            let cfg = commands::PdfConfig {
                lambda_a: file.require(point.lambda_a, "lambda-a")?,
                t_s: file.require(point.ts, "ts")?,
                eps: file.or(common.eps, "eps", 0.0)?,
                distance_km: file.require(distance, "distance")?,
                tol: file.or(common.tol, "tol", DEFAULT_TOL)?,
                x_min: file.or(x_min, "x-min", -4.0)?,
                x_max: file.or(x_max, "x-max", 4.0)?,
                points: file.or(points, "points", 801)?,
            };
            commands::pdf(&cfg, format(&common)?, out(&common)?.as_deref())
        }
        Command::Validate { common, battery } => {
            let battery = file.pick(battery, "battery")?;
            commands::validate(
                battery.as_deref(),
                format(&common)?,
                out(&common)?.as_deref(),
            )
        }
    }
}

/// Numerical failures exit with 3; anything else that stops a run before it
/// produces output is a configuration problem.
fn exit_code(err: &anyhow::Error) -> u8 {
    use scissor_qkd::Error as E;
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::NonTerminating { .. }
                | E::ZeroState
                | E::TailBound { .. }
                | E::NonHermitian { .. }
                | E::NegativeProbability { .. }
                | E::Invariant(_) => EXIT_NOT_CONVERGED,
                _ => EXIT_CONFIG,
            };
        }
    }
    EXIT_CONFIG
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::ValidationFailed) => ExitCode::from(EXIT_VALIDATION),
        Ok(Outcome::NotConverged) => ExitCode::from(EXIT_NOT_CONVERGED),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
