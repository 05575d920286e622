use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sagnac_sim::commands::{
    build_thread_pool, cmd_design, cmd_fringe, cmd_run, cmd_sensitivity, exit_code,
    parse_thread_count, write_fringe, CommandError, THREADS_ENV,
};
use sagnac_sim::config::SimulationConfig;

/// Single-photon Sagnac interferometer simulator.
#[derive(Parser)]
#[command(name = "sagnac-sim", version)]
struct Cli {
    /// `key = value` configuration file; the reference setup is used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print omega_pi, loop transit time, occupancy and scale factor.
    Design,
    /// Write the noise-free expected fringe as CSV.
    Fringe {
        #[arg(long, allow_hyphen_values = true)]
        omega_min: f64,
        #[arg(long, allow_hyphen_values = true)]
        omega_max: f64,
        #[arg(long)]
        points: usize,
        /// Output CSV path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the Monte Carlo, write the bin CSV and print the fit summary.
    Run {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Integration time and rotation resolution at a given count rate.
    Sensitivity {
        #[arg(long)]
        rate: f64,
        #[arg(long, allow_hyphen_values = true)]
        target_sigma: f64,
    },
}

fn load_config(path: Option<&PathBuf>) -> Result<SimulationConfig, CommandError> {
    match path {
        Some(p) => Ok(SimulationConfig::load(p)?),
        None => Ok(SimulationConfig::reference()),
    }
}

fn run(cli: Cli) -> Result<i32, CommandError> {
    let cfg = load_config(cli.config.as_ref())?;
    match cli.command {
        Command::Design => {
            print!("{}", cmd_design(&cfg).report());
        }
        Command::Fringe {
            omega_min,
            omega_max,
            points,
            out,
        } => {
            let rows = cmd_fringe(&cfg, omega_min, omega_max, points)?;
            write_fringe(&rows, out.as_deref())?;
        }
        Command::Run { seed, out } => {
            let threads = parse_thread_count(std::env::var(THREADS_ENV).ok().as_deref())?;
            let pool = build_thread_pool(threads)?;
            let outcome = pool.install(|| cmd_run(&cfg, seed, &out))?;
            print!("{}", outcome.report(Some(&out)));
            if outcome.fit_failed() {
                return Ok(exit_code::FIT_FAILURE);
            }
        }
        Command::Sensitivity { rate, target_sigma } => {
            print!("{}", cmd_sensitivity(&cfg, rate, target_sigma)?.report());
        }
    }
    Ok(exit_code::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
