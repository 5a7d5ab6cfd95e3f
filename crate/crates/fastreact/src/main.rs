use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fastreact::{commands, CliError, RunConfig};

#[derive(Parser)]
#[command(
    name = "fastreact",
    version,
    about = "Reaction-cross-diffusion solver and fast-reaction limit study"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scheme; writes fields.csv and entropy.csv.
    Simulate(Common),
    /// Compare runs over several eps against the reduced system; writes sweep.csv.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated relaxation times.
        #[arg(long, value_delimiter = ',', default_value = "1e-1,1e-2,1e-3")]
        epsilons: Vec<f64>,
        /// Worker threads; 1 runs everything on the calling thread.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Solve the reduced system; writes limit.csv and limit_entropy.csv.
    Limit(Common),
    /// Print the assumption certificate and inversion round-trip errors.
    Check {
        #[command(flatten)]
        common: Common,
        /// Seed for the randomized round trips.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct Common {
    /// TOML configuration; the reference setup when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, overriding output.dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn setup(&self, enforce_certified: bool) -> Result<fastreact::Setup, CliError> {
        let cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        cfg.setup(enforce_certified)
    }
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Simulate(c) => commands::simulate(&c.setup(true)?, c.out.as_deref()).map(drop),
        Command::Sweep {
            common,
            epsilons,
            threads,
        } => {
            let threads = threads
                .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            commands::sweep(
                &common.setup(true)?,
                &epsilons,
                threads,
                common.out.as_deref(),
            )
            .map(drop)
        }
        Command::Limit(c) => commands::limit(&c.setup(true)?, c.out.as_deref()).map(drop),
        Command::Check { common, seed } => {
            commands::check(&common.setup(false)?, seed, common.out.as_deref()).map(drop)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // clap would use 2, which is reserved for solver failures
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
