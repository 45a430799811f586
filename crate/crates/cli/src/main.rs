mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{ExportFormat, RunOptions};

/// Evolutionary generative merging experiments.
#[derive(Debug, Parser)]
#[command(name = "evogm", version)]
struct Cli {
    /// Threads for batch evaluation and parallel seeds (default: logical CPUs).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `out` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed to run instead of the config's list; repeatable.
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    /// Run seeds as independent parallel jobs.
    #[arg(long)]
    parallel_seeds: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run EvoGM for every configured seed.
    Run {
        #[command(flatten)]
        args: RunArgs,
        /// Stop each seed after this many steps, leaving a resumable checkpoint.
        #[arg(long, hide = true)]
        max_steps: Option<usize>,
    },
    /// Run EvoGM and the configured baselines at a matched budget.
    Compare {
        #[command(flatten)]
        args: RunArgs,
    },
    /// Continue an interrupted run from its checkpoint.
    Resume {
        /// A per-seed run directory.
        run_dir: PathBuf,
    },
    /// Write the per-iteration mean-top-5 table and a text summary of a run.
    Export {
        run_dir: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: ExportFormat,
        /// Directory for the exported files (default: the run directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Config and usage problems exit with 2, everything else with 1.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<config::ConfigError>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<evogm::Error>() {
            if matches!(
                e,
                evogm::Error::InvalidConfig(_) | evogm::Error::InsufficientSeeds { .. }
            ) {
                return 2;
            }
        }
    }
    1
}

fn options(args: &RunArgs, max_steps: Option<usize>) -> RunOptions {
    RunOptions {
        out: args.out.clone(),
        seeds: args.seeds.clone(),
        parallel_seeds: args.parallel_seeds,
        max_steps,
    }
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(config::ConfigError::Schema {
                path: "--workers".into(),
                key: "workers".into(),
                message: "must be >= 1".into(),
            }
            .into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    match cli.command {
        Command::Run { args, max_steps } => {
            let experiment = config::load(&args.config)?;
            commands::run(experiment, &options(&args, max_steps))
        }
        Command::Compare { args } => {
            let experiment = config::load(&args.config)?;
            commands::compare_cmd(experiment, &options(&args, None))
        }
        Command::Resume { run_dir } => commands::resume(&run_dir),
        Command::Export {
            run_dir,
            format,
            out,
        } => commands::export(&run_dir, format, out.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
