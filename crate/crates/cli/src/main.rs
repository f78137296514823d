mod commands;
mod output;

use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "macrogrid", version, about = "AC-MTDC macrogrid studies: powerflow, simulation, ringdown analysis, frequency scanning and damping-controller design")]
struct Cli {
    /// Scenario file (TOML, may include other files).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory receiving every output file.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads for parallel batches; defaults to all cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sequential AC-DC powerflow of the scenario.
    Powerflow,
    /// Runs the scenario's event list and records its channels.
    Simulate {
        /// Overrides the configured run length, s.
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Estimates modes from recorded ringdowns (one or more CSV files).
    Analyze {
        /// Time-series CSVs; defaults to the simulate output in the out dir.
        inputs: Vec<PathBuf>,
        /// Ringdown start, s; defaults to the release of the first configured event.
        #[arg(long)]
        t_start: Option<f64>,
        #[arg(long, value_enum)]
        method: Option<Method>,
        /// Ringdown window, s.
        #[arg(long)]
        window: Option<f64>,
    },
    /// Probes a converter with a multisine and fits a transfer function.
    Freqscan {
        #[arg(long)]
        converter: Option<String>,
        /// Output channel, e.g. `wi.freq.Seattle`.
        #[arg(long)]
        output: Option<String>,
    },
    /// Designs a damping controller from a fitted transfer function.
    Design {
        /// Transfer-function JSON; defaults to the freqscan output in the out dir.
        #[arg(long)]
        tf: Option<PathBuf>,
        /// Target damping ratio.
        #[arg(long)]
        zeta: Option<f64>,
        /// Pick the plant mode nearest this frequency, Hz.
        #[arg(long)]
        target_freq: Option<f64>,
    },
    /// Simulates the configured disturbance with the controller off and on.
    Validate {
        /// Controller JSON; defaults to the design output in the out dir.
        #[arg(long)]
        params: Option<PathBuf>,
        /// Open-loop frequency of the targeted mode, Hz.
        #[arg(long)]
        target_freq: Option<f64>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Method {
    Prony,
    MatrixPencil,
}

/// Failure classes mapped onto exit codes.
#[derive(Debug)]
enum Failure {
    /// Bad arguments, configuration or input files: exit 2.
    Usage(String),
    /// A solver or estimator failed: exit 1.
    Numerical(String),
}

impl From<macrogrid::Error> for Failure {
    fn from(e: macrogrid::Error) -> Self {
        use macrogrid::Error as E;
        match e {
            E::Config(_)
            | E::Validation(_)
            | E::UnknownChannel(_)
            | E::Window(_)
            | E::InvalidBand { .. }
            | E::Io(_)
            | E::Csv(_)
            | E::Json(_) => Failure::Usage(e.to_string()),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs.unwrap_or(0)).build();
    let result = match pool {
        Ok(pool) => pool.install(|| commands::run(&cli)),
        Err(e) => Err(Failure::Usage(format!("thread pool: {e}"))),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
