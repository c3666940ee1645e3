use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use countmorl_cli::commands::{cmd_count_audit, cmd_gen_data, cmd_run, cmd_sweep, cmd_theory_check};
use countmorl_cli::{ExperimentConfig, StageError};

#[derive(Parser)]
#[command(name = "countmorl", version, about = "Count-based conservative offline RL on finite MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate datasets and print exact-count coverage.
    GenData(Common),
    /// Compare hashed counts with exact counts.
    CountAudit(Common),
    /// Check the estimation-error bound and the value inequalities.
    TheoryCheck(Common),
    /// Run the full pipeline over the configured seeds.
    Run(Common),
    /// Run a grid over count mode, beta, horizon, code bits and alpha.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    /// TOML experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed (overrides `seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    workers: Option<usize>,
}

fn execute(command: Command) -> Result<Vec<String>, StageError> {
    let (Command::GenData(common)
    | Command::CountAudit(common)
    | Command::TheoryCheck(common)
    | Command::Run(common)
    | Command::Sweep(common)) = &command;
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    let workers = common
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let out = cfg.output_dir.clone();
    let result = match command {
        Command::GenData(_) => cmd_gen_data(&cfg, &out),
        Command::CountAudit(_) => cmd_count_audit(&cfg, &out),
        Command::TheoryCheck(_) => cmd_theory_check(&cfg, &out, workers),
        Command::Run(_) => cmd_run(&cfg, &out, workers),
        Command::Sweep(_) => cmd_sweep(&cfg, &out, workers),
    }?;
    result.into_result()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(lines) => {
            for line in lines {
                println!("{line}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.stage.exit_code() as u8)
        }
    }
}
