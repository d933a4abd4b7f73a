mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::LevelFilter;

use config::{ConfigError, Loaded};

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NO_SOLUTION: u8 = 3;
pub const EXIT_VERIFY: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "fraclink", version, about = "Critical points of the half-Laplacian semilinear Dirichlet problem")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// RNG seed, overriding `rng_seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Only errors on stderr, no summary on stdout.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Build the basis; write basis.json and spectrum.csv.
    Eig,
    /// Find critical points at the configured lambda values.
    Solve,
    /// Three-solution scan below an eigenvalue cluster.
    Multiplicity,
    /// Run the verification suite.
    Verify,
}

fn load(cli: &Cli) -> Result<Loaded, ConfigError> {
    let path = cli.config.as_ref().ok_or(ConfigError {
        line: None,
        message: "--config PATH is required".into(),
    })?;
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        line: None,
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    let mut loaded = Loaded::parse(&text)?;
    loaded.apply_seed(cli.seed);
    if let Some(out) = &cli.out {
        loaded.config.output_dir = out.clone();
    }
    std::fs::create_dir_all(&loaded.config.output_dir)
        .map_err(|e| loaded.error("output_dir", format!("output_dir {} is not writable: {e}", loaded.config.output_dir.display())))?;
    Ok(loaded)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.quiet { LevelFilter::Error } else { LevelFilter::Warn })
        .format_timestamp(None)
        .init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("cannot configure {n} threads: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    let loaded = match load(&cli) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let run = match cli.command {
        Command::Eig => commands::eig(&loaded, cli.quiet),
        Command::Solve => commands::solve(&loaded, cli.quiet),
        Command::Multiplicity => commands::multiplicity(&loaded, cli.quiet),
        Command::Verify => commands::verify(&loaded, cli.quiet),
    };
    match run {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            if let Some(ce) = e.downcast_ref::<ConfigError>() {
                eprintln!("{ce}");
                ExitCode::from(EXIT_CONFIG)
            } else {
                eprintln!("error: {e:#}");
                ExitCode::FAILURE
            }
        }
    }
}
