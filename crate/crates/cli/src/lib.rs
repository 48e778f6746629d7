//! Command-line front end: configuration, file formats and subcommands.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "opres", version, about = "Learn Lipschitz operators between function spaces from sample pairs", after_help = config::DEFAULTS_HELP)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Main output file; defaults to the matching entry of `[paths]`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the config's `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; falls back to OPRES_THREADS, then to all cores.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw 2n pairs (u, Ψ(u) + ε) and write a dataset file.
    GenData {
        #[command(flatten)]
        common: Common,
    },
    /// Split, fit encoders, train the network; writes a checkpoint and `<out>.trace.csv`.
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset file; defaults to `paths.dataset`.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Monte Carlo error report for a checkpoint, written as CSV.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Checkpoint file; defaults to `paths.checkpoint`.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Rate sweep over `sweep.n_values`; writes CSV and an SVG plot beside it.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Print the config with every default filled in.
    Config {
        #[command(flatten)]
        common: Common,
    },
}

fn configure_threads(flag: Option<usize>) -> Result<(), CliError> {
    let threads = match flag {
        Some(t) => Some(t),
        None => match std::env::var("OPRES_THREADS") {
            Ok(v) => Some(
                v.trim()
                    .parse()
                    .map_err(|_| CliError::Config(format!("OPRES_THREADS: `{v}` is not a thread count")))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(t) = threads {
        if t == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        if t == 1 {
            opres_core::par::set_execution(opres_core::par::Execution::Sequential);
        } else {
            opres_core::par::init_threads(t);
        }
    }
    Ok(())
}

/// Runs a parsed command line and returns the summary and exit code.
pub fn run(cli: Cli) -> Result<commands::Outcome, CliError> {
    let (common, command) = match &cli.command {
        Command::GenData { common }
        | Command::Train { common, .. }
        | Command::Eval { common, .. }
        | Command::Sweep { common }
        | Command::Config { common } => (common, &cli.command),
    };
    configure_threads(common.threads)?;
    let cfg = commands::load_config(&common.config)?;
    let seed = common.seed.unwrap_or(cfg.seed);
    let out = |default: &str| common.out.clone().unwrap_or_else(|| PathBuf::from(default));
    match command {
        Command::GenData { .. } => commands::gen_data(&cfg, seed, &out(&cfg.paths.dataset)),
        Command::Train { data, .. } => {
            let data = data.clone().unwrap_or_else(|| PathBuf::from(&cfg.paths.dataset));
            commands::train(&cfg, seed, &data, &out(&cfg.paths.checkpoint))
        }
        Command::Eval { model, .. } => {
            let model = model.clone().unwrap_or_else(|| PathBuf::from(&cfg.paths.checkpoint));
            commands::eval(&cfg, seed, &model, &out(&cfg.paths.report))
        }
        Command::Sweep { .. } => commands::sweep(&cfg, seed, &out(&cfg.paths.sweep)),
        Command::Config { .. } => {
            let mut c = cfg.clone();
            c.seed = seed;
            Ok(commands::Outcome {
                summary: c.normalized(),
                exit_code: 0,
            })
        }
    }
}
