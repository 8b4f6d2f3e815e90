//! `dissprep` command-line runner.
//!
//! Data goes to files under the run directory; diagnostics go to stderr.
//! Exit codes: 0 ok, 1 validation, 2 capacity guard, 3 numerical failure.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dissprep::Error;

pub const OUTPUT_ROOT_ENV: &str = "DISSPREP_OUTPUT_ROOT";

#[derive(Parser, Debug)]
#[command(name = "dissprep", version, about = "Dissipative preparation of tensor-network states")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct OutArgs {
    /// Run directory. Defaults to `$DISSPREP_OUTPUT_ROOT/<command>` (root `runs`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Full spectra of the channel and/or the Liouvillian.
    Spectrum {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long, value_enum, default_value_t = Protocol::Both)]
        protocol: Protocol,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Spectral gap of H and H′.
    Gap {
        #[arg(long)]
        spec: PathBuf,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Local norm inequalities and the gap lower bound.
    Bounds {
        #[arg(long)]
        spec: PathBuf,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Time evolution under the channel, the Lindbladian, or trajectories.
    Evolve(EvolveArgs),
    /// Build the global channel and report Kraus data.
    Channel {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        gamma: Option<f64>,
        /// Also write every Kraus operator to `kraus.json`.
        #[arg(long)]
        dump: bool,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Scripted g-family experiments.
    Experiment(ExperimentArgs),
    /// Block an MPS into a ring spec.
    Block(BlockArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Channel,
    Lindblad,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EvolveProtocol {
    Channel,
    Lindblad,
    Trajectories,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Average,
    Sampled,
}

#[derive(Args, Debug, Clone)]
pub struct EvolveArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long, value_enum, default_value_t = EvolveProtocol::Channel)]
    pub protocol: EvolveProtocol,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Channel steps.
    #[arg(long, default_value_t = 200)]
    pub steps: usize,
    #[arg(long, default_value_t = 1)]
    pub cadence: usize,
    #[arg(long, value_enum, default_value_t = Mode::Average)]
    pub mode: Mode,
    /// Lindblad final time.
    #[arg(long, default_value_t = 10.0)]
    pub t_final: f64,
    #[arg(long, default_value_t = 0.1)]
    pub dt: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub rtol: f64,
    #[arg(long, default_value_t = 1e-12)]
    pub atol: f64,
    #[arg(long, default_value_t = 1024)]
    pub trajectories: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// `maximally_mixed`, `product:k0,k1,...` or `file:<path>` (JSON matrix of [re, im]).
    #[arg(long, default_value = "maximally_mixed")]
    pub start: String,
    #[arg(long, default_value_t = 0.999)]
    pub threshold: f64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug, Clone)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub kind: String,
    /// JSON config; flags below override its keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub g: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub l: Option<usize>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub g_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub n_grid: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub l_grid: Option<Vec<usize>>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug, Clone)]
pub struct BlockArgs {
    /// MPS chain file; alternatively give `--g` for the g-family.
    #[arg(long, conflicts_with = "g")]
    pub mps: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    pub g: Option<f64>,
    /// Chain length (defaults to the file's `length`).
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub l: usize,
    #[arg(long)]
    pub ungauged: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

/// Errors seen by `main`, each mapped to an exit code.
#[derive(Debug)]
pub enum CliError {
    Lib(Error),
    /// Unreadable or malformed input; reported as a validation failure.
    Input(String),
    Io(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 1,
            CliError::Lib(Error::Validation(_)) => 1,
            CliError::Lib(Error::Capacity(_)) => 2,
            CliError::Lib(Error::Numerical(_) | Error::Gamma { .. }) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Lib(e) => write!(f, "{e}"),
            CliError::Input(s) => write!(f, "validation: {s}"),
            CliError::Io(s) => write!(f, "io: {s}"),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("validation: --threads must be positive");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("validation: could not size the worker pool: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(cli.command) {
        Ok(dir) => {
            eprintln!("wrote {}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
