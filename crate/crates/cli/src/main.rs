mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "mwum-net", version, about = "MWUM-alpha network experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(tag = "command", rename_all = "lowercase")]
enum Command {
    /// Effective load, admissibility class, critical resources and balance factor.
    Capacity(CapacityArgs),
    /// Seeded packet-level simulation runs.
    Simulate(SimulateArgs),
    /// Euler integration of the fluid model.
    Fluid(FluidArgs),
    /// Sup distance between scaled simulations and the fluid model.
    Compare(CompareArgs),
    /// Invariance test and lift distance over a set of states.
    Invariant(InvariantArgs),
    /// Cost of MWUM against round robin along fluid trajectories.
    Balance(BalanceArgs),
    /// Lifting map of a single state.
    Lift(LiftArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
struct Common {
    /// Topology description (JSON).
    #[arg(long)]
    topology: PathBuf,
    /// Multiplies every flow arrival rate.
    #[arg(long, default_value_t = 1.0)]
    rho_scale: f64,
    /// Overrides the topology's rate cap C.
    #[arg(long = "c-max")]
    c_max: Option<f64>,
}

#[derive(Args, Debug, Serialize)]
struct CapacityArgs {
    #[command(flatten)]
    common: Common,
    /// Also write the report and a manifest into this directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Number of slots.
    #[arg(long)]
    horizon: u64,
    /// Seeds, e.g. `1,2,7` or `0..20`.
    #[arg(long, alias = "seed")]
    seeds: Option<String>,
    /// Draw a seed when none is given (it is recorded in the manifest).
    #[arg(long)]
    allow_unseeded: bool,
    /// Initial flow counts, comma separated.
    #[arg(long)]
    n0: Option<String>,
    /// Initial queue lengths, comma separated.
    #[arg(long)]
    q0: Option<String>,
    /// Also write the full event log as JSON lines.
    #[arg(long)]
    events: bool,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(ValueEnum, Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "kebab-case")]
enum PolicyChoice {
    Mwum,
    RoundRobin,
}

#[derive(Args, Debug, Serialize)]
struct FluidArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long)]
    horizon: f64,
    /// Euler step; defaults to the largest admissible step.
    #[arg(long)]
    step: Option<f64>,
    /// Time between recorded samples.
    #[arg(long, default_value_t = 0.1)]
    record_every: f64,
    #[arg(long, value_enum, default_value = "mwum")]
    policy: PolicyChoice,
    #[arg(long)]
    n0: Option<String>,
    #[arg(long)]
    q0: Option<String>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct CompareArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Fluid horizon.
    #[arg(long, default_value_t = 2.0)]
    horizon: f64,
    #[arg(long)]
    step: Option<f64>,
    /// Time between compared fluid samples.
    #[arg(long, default_value_t = 0.02)]
    record_every: f64,
    /// Scaling parameters r, comma separated (at least two).
    #[arg(long)]
    scales: String,
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    n0: Option<String>,
    #[arg(long)]
    q0: Option<String>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct InvariantArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// JSON file holding `[{"n": [...], "q": [...]}, ...]`; a regular grid is used otherwise.
    #[arg(long)]
    states: Option<PathBuf>,
    /// Tolerance of the invariance conditions.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct BalanceArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 50.0)]
    horizon: f64,
    #[arg(long)]
    step: Option<f64>,
    #[arg(long, default_value_t = 0.1)]
    record_every: f64,
    /// Threshold for the hitting time of the invariant set.
    #[arg(long, default_value_t = 0.05)]
    eps: f64,
    #[arg(long)]
    n0: Option<String>,
    #[arg(long)]
    q0: Option<String>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct LiftArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long)]
    n0: Option<String>,
    #[arg(long)]
    q0: Option<String>,
    /// Also write the report and a manifest into this directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments, unreadable or invalid input files.
    Config(String),
    /// Solver, integrator or simulator failure.
    Numeric(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric error: {m}"),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::dispatch(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mwum-net: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
