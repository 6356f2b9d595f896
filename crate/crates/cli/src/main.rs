use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod error;

use commands::{SweepAxis, WireExperiment};
use config::{load_scenario, read_json, WireConfig};
use error::{CliError, CliResult};

/// Finite-temperature adiabatic evolution: scenarios, sweeps and the wire
/// model.
#[derive(Parser, Debug)]
#[command(name = "thermadiab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one scenario and write trajectory.csv and bound_report.csv.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the scenario once per value of one parameter.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        axis: SweepAxis,
        /// Comma-separated list.
        #[arg(long)]
        values: String,
    },
    /// Wire-model experiments.
    Wire {
        #[arg(long, value_enum)]
        experiment: WireExperiment,
        /// JSON wire settings; defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Check adjacent-gap functionals against the all-pairs formula.
    LemmaCheck {
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        /// `N` or `MIN-MAX`.
        #[arg(long, default_value = "3-10")]
        dims: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn configure_threads() -> CliResult<()> {
    if let Ok(value) = std::env::var("THERMADIAB_THREADS") {
        let n: usize = value.parse().ok().filter(|&n| n > 0).ok_or_else(|| {
            CliError::Usage(format!(
                "THERMADIAB_THREADS={value:?} is not a positive integer"
            ))
        })?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    configure_threads()?;
    match cli.command {
        Command::Simulate { config, out, seed } => {
            let mut cfg = load_scenario(&config)?;
            cfg.seed = seed.unwrap_or(cfg.seed);
            let out = commands::default_out(cfg.output.as_ref(), out);
            let outcome = commands::simulate(&cfg, &out)?;
            println!(
                "final lhs {:.6e} rhs {:.6e} min margin {:.6e}",
                outcome.report.lhs_measured.last().copied().unwrap_or(0.0),
                outcome.report.rhs_total.last().copied().unwrap_or(0.0),
                outcome.report.min_margin.unwrap_or(0.0)
            );
        }
        Command::Sweep {
            config,
            out,
            seed,
            axis,
            values,
        } => {
            let mut cfg = load_scenario(&config)?;
            cfg.seed = seed.unwrap_or(cfg.seed);
            let values = commands::parse_values(&values)?;
            let out = commands::default_out(cfg.output.as_ref(), out);
            let rows = commands::sweep(&cfg, axis, &values, &out)?;
            let failed = rows.iter().filter(|r| r.result.is_err()).count();
            println!("{} runs, {failed} failed", rows.len());
        }
        Command::Wire {
            experiment,
            config,
            out,
            seed,
        } => {
            let cfg: WireConfig = match config {
                Some(path) => read_json(&path)?,
                None => WireConfig::default(),
            };
            commands::wire(
                &cfg,
                experiment,
                seed,
                &out.unwrap_or_else(|| PathBuf::from(".")),
            )?;
        }
        Command::LemmaCheck { trials, dims, seed } => {
            let dims = commands::parse_dims(&dims)?;
            let summary = commands::lemma_check(trials, dims, seed)?;
            println!(
                "{} trials agree, worst relative deviation {:.3e}",
                summary.trials, summary.worst
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{} {e}", e.tag());
            ExitCode::FAILURE
        }
    }
}
