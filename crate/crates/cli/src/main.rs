//! `theatre`: generate weeks, simulate reactive strategies, tune reaction
//! probabilities and export day models.
//!
//! Exit codes: 0 success, 1 internal error, 2 usage or input error.

mod commands;
mod config;
mod error;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use theatre::reactive::UpdateStrategy;

use config::{load_base, ExportConfig, GenerateConfig, Manifest, Resolved, SimulateConfig, TuneConfig};

#[derive(Parser)]
#[command(name = "theatre", version, about = "Reactive operating-theatre scheduling experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Output directory; a manifest.json is written into it.
    #[arg(long)]
    out: PathBuf,
    /// JSON file with the command's settings; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a week instance.
    Generate {
        #[command(flatten)]
        common: Common,
        /// Generator parameters (JSON); defaults otherwise.
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Simulate replications of a week under one or more update strategies.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Week instance (JSON) shared by every replication.
        #[arg(long, conflicts_with = "params")]
        instance: Option<PathBuf>,
        /// Generator parameters; each replication draws its own week.
        #[arg(long)]
        params: Option<PathBuf>,
        /// Reaction policy (JSON); the built-in tuned table otherwise.
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Fill cells missing from --policy with the do-nothing prior.
        #[arg(long)]
        fill_prior: bool,
        /// Strategy to run; repeat for several. All six by default.
        #[arg(long, value_parser = parse_strategy)]
        strategy: Vec<UpdateStrategy>,
        #[arg(long)]
        replications: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Fill the wall-clock columns (output is then not reproducible).
        #[arg(long)]
        timing: bool,
        /// Skip the trace and Gantt output of replication 0.
        #[arg(long)]
        no_traces: bool,
        /// Check feasibility after every update.
        #[arg(long)]
        verify: bool,
    },
    /// Tune reaction probabilities for one strategy.
    Tune {
        #[command(flatten)]
        common: Common,
        #[arg(long, conflicts_with = "params")]
        instance: Option<PathBuf>,
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long, value_parser = parse_strategy)]
        strategy: Option<UpdateStrategy>,
        #[arg(long)]
        seed: Option<u64>,
        /// Simulations per evaluation.
        #[arg(long)]
        replications: Option<u64>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        scale: Option<f64>,
        #[arg(long)]
        patience: Option<usize>,
    },
    /// Write the linear model of one day of a week instance in LP format.
    ExportMip {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        instance: Option<PathBuf>,
        #[arg(long)]
        day: Option<u32>,
    },
    /// Re-run a command from its manifest.
    Replay {
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_strategy(s: &str) -> Result<UpdateStrategy, String> {
    s.parse().map_err(|e: theatre::reactive::PolicyError| e.to_string())
}

fn resolve(command: Command) -> anyhow::Result<(Resolved, PathBuf)> {
    let base = |c: &Common| c.config.clone();
    Ok(match command {
        Command::Generate { common, params, seed } => {
            let mut c: GenerateConfig = load_base(base(&common).as_deref())?;
            c.params = params.or(c.params);
            c.seed = seed.or(c.seed);
            (Resolved::Generate(c), common.out)
        }
        Command::Simulate {
            common,
            instance,
            params,
            policy,
            fill_prior,
            strategy,
            replications,
            seed,
            timing,
            no_traces,
            verify,
        } => {
            let mut c: SimulateConfig = load_base(base(&common).as_deref())?;
            if instance.is_some() || params.is_some() {
                c.instance = instance;
                c.params = params;
            }
            c.policy = policy.or(c.policy);
            c.fill_prior |= fill_prior;
            if !strategy.is_empty() {
                c.strategies = strategy;
            }
            c.replications = replications.unwrap_or(c.replications);
            c.seed = seed.unwrap_or(c.seed);
            c.timing |= timing;
            c.traces &= !no_traces;
            c.verify |= verify;
            (Resolved::Simulate(c), common.out)
        }
        Command::Tune { common, instance, params, strategy, seed, replications, iterations, scale, patience } => {
            let mut c: TuneConfig = load_base(base(&common).as_deref())?;
            if instance.is_some() || params.is_some() {
                c.instance = instance;
                c.params = params;
            }
            let t = &mut c.tuner;
            t.strategy = strategy.unwrap_or(t.strategy);
            t.seed = seed.unwrap_or(t.seed);
            t.n_runs = replications.unwrap_or(t.n_runs);
            t.max_iterations = iterations.unwrap_or(t.max_iterations);
            t.perturbation_scale = scale.unwrap_or(t.perturbation_scale);
            t.patience = patience.unwrap_or(t.patience);
            (Resolved::Tune(c), common.out)
        }
        Command::ExportMip { common, instance, day } => {
            let mut c: ExportConfig = load_base(base(&common).as_deref())?;
            c.instance = instance.or(c.instance);
            c.day = day.unwrap_or(c.day);
            (Resolved::ExportMip(c), common.out)
        }
        Command::Replay { manifest, out } => (Manifest::load(&manifest)?.run, out),
    })
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let (resolved, out) = resolve(cli.command)?;
    commands::run(&resolved, Path::new(&out))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(error::exit_code(&e) as u8)
        }
    }
}
