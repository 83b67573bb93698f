//! `gcf` — command-line driver for the surplus-transform toolkit.
//!
//! Subcommands: `auction` (train a menu mechanism), `ot` (solve a
//! discrete transport dual), `validate` (run an invariant suite), and
//! `export-grid` (render a saved mechanism on a lattice). Every run
//! writes a `manifest.json` recording the merged config, the resolved
//! seed, and crate versions, so an identical invocation reproduces the
//! artifacts bit for bit.
//!
//! Exit codes: 0 on success, 2 for configuration errors, 3 for
//! numerical aborts, 4 when a validation suite reports a failure.

mod config;
mod runs;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;

/// What went wrong, bucketed by exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags, config file, input file, or output path (exit 2).
    Config(String),
    /// A solver aborted on non-finite or diverging numbers (exit 3).
    Numerical(String),
    /// A validation suite ran but reported failing checks (exit 4).
    Validation(String),
}

impl Failure {
    /// Treats any library error as a configuration problem. Used where
    /// the inputs are still being checked, before real work starts.
    pub fn config(e: gcf_core::Error) -> Failure {
        Failure::Config(e.to_string())
    }

    fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Numerical(_) => 3,
            Failure::Validation(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Numerical(m) | Failure::Validation(m) => m,
        }
    }
}

/// Once a run is underway, numerical failures keep their own exit
/// code; everything else still reads as a configuration problem.
impl From<gcf_core::Error> for Failure {
    fn from(e: gcf_core::Error) -> Failure {
        match e {
            gcf_core::Error::Numerical { .. } | gcf_core::Error::NonFiniteGradient { .. } => {
                Failure::Numerical(e.to_string())
            }
            other => Failure::Config(other.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "gcf",
    version,
    about = "Surplus-transform solvers: auction training, transport duals, validation suites"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Base seed for all randomness in the run.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Directory artifacts are written into (defaults to the current directory).
    #[arg(long, value_name = "DIR", global = true)]
    out: Option<PathBuf>,

    /// Cap on worker threads used by the solvers.
    #[arg(long, value_name = "N", global = true)]
    threads: Option<usize>,

    /// Flat JSON config file; flags given here override its values.
    #[arg(long, value_name = "FILE", global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a revenue-maximizing menu mechanism and write its artifacts.
    Auction(AuctionArgs),
    /// Solve the dual of a discrete transport instance.
    Ot(OtArgs),
    /// Run a named validation suite and write its JSON report.
    Validate(ValidateArgs),
    /// Render a saved mechanism's menu on a type-space lattice as CSV.
    ExportGrid(ExportGridArgs),
}

#[derive(Args)]
struct AuctionArgs {
    /// Number of items for sale.
    #[arg(long)]
    items: Option<usize>,
    /// Menu entries to train, counting the frozen opt-out entry.
    #[arg(long)]
    menu_size: Option<usize>,
    /// Size of the training sample pool.
    #[arg(long)]
    train_samples: Option<usize>,
    /// Minibatch size per optimizer step.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Passes over the pool at each temperature stage.
    #[arg(long)]
    epochs_per_stage: Option<usize>,
    /// First softmax temperature of the annealing ladder.
    #[arg(long)]
    tau_start: Option<f64>,
    /// Last (sharpest) softmax temperature.
    #[arg(long)]
    tau_end: Option<f64>,
    /// Number of temperature stages.
    #[arg(long)]
    stages: Option<usize>,
    /// Optimizer learning rate at the first stage.
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Multiplier on the learning rate at each stage change.
    #[arg(long)]
    lr_stage_decay: Option<f64>,
    /// Monte Carlo sample count for the final evaluation report.
    #[arg(long)]
    eval_samples: Option<usize>,
    /// Stop early when a stage improves exact revenue by less than this.
    #[arg(long)]
    early_stop_min_gain: Option<f64>,
    /// Also render the trained menu on an N-per-axis lattice into grid.csv.
    #[arg(long, value_name = "N")]
    export_grid: Option<usize>,
}

#[derive(Args)]
struct OtArgs {
    /// JSON instance file: source measure, target measure, kernel.
    #[arg(long, value_name = "FILE")]
    instance: Option<PathBuf>,
    /// Iterations of the averaged decreasing-step phase.
    #[arg(long)]
    sqrt_iters: Option<u64>,
    /// Multiplier on the automatic step scale.
    #[arg(long)]
    step_c: Option<f64>,
    /// Number of geometric polish epochs.
    #[arg(long)]
    polish_epochs: Option<u32>,
    /// Iterations per polish epoch.
    #[arg(long)]
    polish_iters: Option<u64>,
    /// Objective improvement below which the run counts as converged.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Suite to run: lemmas, lean, uap, gradients, duality,
    /// auction-identities, or all.
    suite: Option<String>,
}

#[derive(Args)]
struct ExportGridArgs {
    /// Mechanism JSON file produced by the auction command.
    #[arg(long, value_name = "FILE")]
    mechanism: Option<PathBuf>,
    /// Lattice resolution per item axis.
    #[arg(long, value_name = "N")]
    per_axis: Option<usize>,
}

/// Folds the common flags and the subcommand's flags into one
/// [`RunConfig`] holding only the fields that were actually given.
fn flag_config(cli: &Cli) -> RunConfig {
    let mut c = RunConfig {
        seed: cli.seed,
        out: cli.out.clone(),
        threads: cli.threads,
        ..RunConfig::default()
    };
    match &cli.command {
        Command::Auction(a) => {
            c.items = a.items;
            c.menu_size = a.menu_size;
            c.train_samples = a.train_samples;
            c.batch_size = a.batch_size;
            c.epochs_per_stage = a.epochs_per_stage;
            c.tau_start = a.tau_start;
            c.tau_end = a.tau_end;
            c.stages = a.stages;
            c.learning_rate = a.learning_rate;
            c.lr_stage_decay = a.lr_stage_decay;
            c.eval_samples = a.eval_samples;
            c.early_stop_min_gain = a.early_stop_min_gain;
            c.export_grid = a.export_grid;
        }
        Command::Ot(o) => {
            c.instance = o.instance.clone();
            c.sqrt_iters = o.sqrt_iters;
            c.step_c = o.step_c;
            c.polish_epochs = o.polish_epochs;
            c.polish_iters = o.polish_iters;
            c.tol = o.tol;
        }
        Command::Validate(v) => {
            c.suite = v.suite.clone();
        }
        Command::ExportGrid(e) => {
            c.mechanism = e.mechanism.clone();
            c.per_axis = e.per_axis;
        }
    }
    c
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let file = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    let cfg = file.overlay(&flag_config(cli))?;

    if let Some(n) = cfg.threads {
        if n == 0 {
            return Err(Failure::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Config(format!("thread pool: {e}")))?;
    }

    match cli.command {
        Command::Auction(_) => runs::run_auction(cfg),
        Command::Ot(_) => runs::run_ot(cfg),
        Command::Validate(_) => runs::run_validate(cfg),
        Command::ExportGrid(_) => runs::run_export_grid(cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message());
            ExitCode::from(failure.exit_code())
        }
    }
}
