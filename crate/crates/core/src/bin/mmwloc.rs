//! `mmwloc`: position error bound experiments, written as CSV.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 infeasible scenario,
//! 3 bad config or arguments.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mmwloc::scenario::{run, Config, Experiment, ScenarioSpec};
use mmwloc::Error;

#[derive(Parser)]
#[command(
    name = "mmwloc",
    version,
    about = "Position and orientation error bounds for single-anchor mm-wave links"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV path; standard output if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `none`, `perfect` or a clock-error std in seconds.
    #[arg(long)]
    ktt: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Exact vs asymptotic PEB over random geometries.
    Relerr {
        #[command(flatten)]
        common: Common,
        /// Comma-separated antenna counts, used at both ends.
        #[arg(long)]
        antennas: Option<String>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Static PEB heatmap.
    Grid {
        #[command(flatten)]
        common: Common,
        /// `asymptotic` or `exact`.
        #[arg(long)]
        method: Option<String>,
        /// Grid step in metres.
        #[arg(long)]
        step: Option<f64>,
    },
    /// Moving-receiver PEB heatmap next to the static one.
    DynamicGrid {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        step: Option<f64>,
        #[arg(long)]
        speed_kmh: Option<f64>,
    },
    /// Downlink vs uplink PEB CDFs with DFT beams.
    DlulCdf {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        positions: Option<usize>,
    },
}

fn opt(cfg: &mut Config, key: &str, v: Option<impl ToString>) {
    if let Some(v) = v {
        cfg.set(key, v.to_string());
    }
}

fn prepare(command: Command) -> Result<(ScenarioSpec, Option<PathBuf>), Error> {
    let (experiment, common, mut overrides): (_, _, Vec<(&str, Option<String>)>) = match command {
        Command::Relerr {
            common,
            antennas,
            trials,
        } => (
            Experiment::RelErr,
            common,
            vec![
                ("antennas", antennas),
                ("trials", trials.map(|t| t.to_string())),
            ],
        ),
        Command::Grid {
            common,
            method,
            step,
        } => (
            Experiment::Grid,
            common,
            vec![
                ("method", method),
                ("grid_step_m", step.map(|s| s.to_string())),
            ],
        ),
        Command::DynamicGrid {
            common,
            step,
            speed_kmh,
        } => (
            Experiment::DynamicGrid,
            common,
            vec![
                ("grid_step_m", step.map(|s| s.to_string())),
                ("speed_kmh", speed_kmh.map(|s| s.to_string())),
            ],
        ),
        Command::DlulCdf { common, positions } => (
            Experiment::DlUlCdf,
            common,
            vec![("positions", positions.map(|p| p.to_string()))],
        ),
    };
    let mut cfg = match &common.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    overrides.push(("seed", common.seed.map(|s| s.to_string())));
    overrides.push(("ktt", common.ktt));
    for (k, v) in overrides {
        opt(&mut cfg, k, v);
    }
    // exact grids default to the coarser step
    if experiment == Experiment::Grid
        && cfg.raw("method") == Some("exact")
        && cfg.raw("grid_step_m").is_none()
    {
        cfg.set("grid_step_m", "2");
    }
    Ok((ScenarioSpec::from_config(experiment, &cfg)?, common.out))
}

fn execute(command: Command) -> Result<(), Error> {
    let (spec, out) = prepare(command)?;
    let table = run(&spec)?;
    let csv = table.to_csv();
    let io = |e: std::io::Error| Error::InvalidArgument(format!("cannot write output: {e}"));
    match out {
        Some(path) => std::fs::write(&path, csv).map_err(io)?,
        None => std::io::stdout().write_all(csv.as_bytes()).map_err(io)?,
    }
    eprintln!(
        "{}: {} rows, seed {}, config sha256 {}",
        spec.experiment.name(),
        table.rows.len(),
        table.seed,
        table.digest
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mmwloc: {e}");
            ExitCode::from(match e {
                Error::Infeasible(_) => 2,
                Error::Config(_) => 3,
                _ => 1,
            })
        }
    }
}
