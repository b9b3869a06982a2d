mod commands;
mod config;
mod output;

use std::fmt::Debug;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{ConfigError, RunConfig};

/// Runs the scattering-map, highway and diffusion experiments from an INI
/// config and writes CSV tables plus a JSON summary per command.
#[derive(Parser, Debug)]
#[command(name = "arnold", version)]
struct Cli {
    /// INI configuration; every key has a default.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides ARNOLD_OUT_DIR and `[run] out_dir`).
    #[arg(short, long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Classify the crest and tabulate its sheets over the angle grid.
    Crest,
    /// Solve for the critical time and evaluate the reduced potential.
    Tau,
    /// Section portrait of the scattering flow.
    Poincare,
    /// Trace Highway orbits and their section transit times.
    Highway,
    /// Build a pseudo-orbit along an action path.
    Diffuse,
    /// Compare full-system action jumps with the first-order prediction.
    MelnikovVerify,
    /// Diffusion-time estimate along a traced Highway.
    TimeEstimate,
    /// Invariant suite on sampled states.
    Check,
    /// Print the effective configuration.
    Config,
}

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Domain { module: &'static str, detail: String },
    Invariant(String),
    Io(String),
}

impl CliError {
    pub fn domain<E: Debug + std::fmt::Display>(module: &'static str, e: &E) -> Self {
        CliError::Domain {
            module,
            detail: format!("{e}\n  state: {e:?}"),
        }
    }

    pub fn io<E: std::fmt::Display>(path: &Path, e: E) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Domain { .. } => 3,
            CliError::Invariant(_) => 4,
            CliError::Io(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "config error: {e}"),
            CliError::Domain { module, detail } => write!(f, "{module} error: {detail}"),
            CliError::Invariant(m) => write!(f, "invariant violation: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

macro_rules! domain_errors {
    ($($ty:ty => $module:literal),* $(,)?) => {
        $(impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::domain($module, &e)
            }
        })*
    };
}

domain_errors!(
    arnold::model::ModelError => "model",
    arnold::ode::OdeError => "ode",
    arnold::melnikov::MelnikovError => "melnikov",
    arnold::scattering::ScatteringError => "scattering",
    arnold::inner::InnerError => "inner",
    arnold::highway::HighwayError => "highway",
    arnold::diffusion::DiffusionError => "diffusion",
);

fn out_dir(cli: &Cli, cfg: &RunConfig) -> PathBuf {
    cli.out_dir
        .clone()
        .or_else(|| std::env::var_os("ARNOLD_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| cfg.run.out_dir.clone())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let out = out_dir(cli, &cfg);
    match cli.command {
        Command::Crest => commands::crest(&cfg, &out),
        Command::Tau => commands::tau(&cfg, &out),
        Command::Poincare => commands::poincare(&cfg, &out),
        Command::Highway => commands::highway(&cfg, &out),
        Command::Diffuse => commands::diffuse(&cfg, &out),
        Command::MelnikovVerify => commands::melnikov_verify(&cfg, &out),
        Command::TimeEstimate => commands::time_estimate_cmd(&cfg, &out),
        Command::Check => commands::check(&cfg, &out),
        Command::Config => {
            print!("{}", cfg.emit());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("arnold: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
