//! `resfluor`: simulate homodyne records of waveguide resonance fluorescence,
//! reconstruct the filtered field mode and quantify its Wigner negativity.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "resfluor", version, about, args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON file with flat keys matching the flag names.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    run: RunConfig,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the trajectory ensemble and write the filtered photocurrents.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Histogram a record file and reconstruct the field state.
    Reconstruct {
        /// Records CSV written by `simulate`.
        #[arg(long)]
        records: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate the Wigner function of a reconstructed state.
    Wigner {
        /// State JSON written by `reconstruct`.
        #[arg(long)]
        state: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run the full pipeline over a grid of drive strengths and integration times.
    Sweep {
        #[arg(long, value_delimiter = ',', required = true)]
        omegas: Vec<f64>,
        #[arg(long = "Ts", visible_alias = "durations", value_delimiter = ',', required = true)]
        durations: Vec<f64>,
        /// Stop after this many newly computed points; rerun to resume.
        #[arg(long)]
        stop_after: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Repeat the pipeline with independent seeds and report the spread.
    Bootstrap {
        #[arg(long, default_value_t = 20)]
        repeats: usize,
        /// Use 80 repeats.
        #[arg(long, conflicts_with = "repeats")]
        full: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Closed-form reflectance, incoherent points, steady state and displacement.
    Analytic {
        /// Dephasing rates, one table column group each.
        #[arg(long = "gamma-phi", value_delimiter = ',', default_value = "0")]
        gamma_phis: Vec<f64>,
        /// Radiative rate γ.
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        #[arg(long, default_value_t = 1.0)]
        omega_max: f64,
        #[arg(long, default_value_t = 101)]
        points: usize,
        /// Integration time used for the displacement column.
        #[arg(long = "T", default_value_t = 4.0)]
        duration: f64,
        /// Also write the tables (and a manifest) to this directory.
        #[arg(long, short = 'o')]
        output_dir: Option<PathBuf>,
    },
}

impl Common {
    fn resolve(&self) -> Result<RunConfig, commands::CliError> {
        let base = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        Ok(base.overlay(&self.run))
    }
}

fn run(cli: Cli) -> Result<(), commands::CliError> {
    match cli.command {
        Command::Simulate { common } => commands::simulate(&common.resolve()?),
        Command::Reconstruct { records, common } => commands::reconstruct(&common.resolve()?, &records),
        Command::Wigner { state, common } => commands::wigner(&common.resolve()?, &state),
        Command::Sweep {
            omegas,
            durations,
            stop_after,
            common,
        } => commands::sweep(&common.resolve()?, &omegas, &durations, stop_after),
        Command::Bootstrap { repeats, full, common } => {
            commands::bootstrap(&common.resolve()?, if full { 80 } else { repeats })
        }
        Command::Analytic {
            gamma_phis,
            gamma,
            omega_max,
            points,
            duration,
            output_dir,
        } => commands::analytic(&commands::AnalyticArgs {
            gamma_phis,
            gamma,
            omega_max,
            points,
            duration,
            output_dir,
        }),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { commands::EXIT_VALIDATION } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
