use std::path::PathBuf;
use std::process::ExitCode;

use chainttt::commands::{self, AblationTable, RunOptions};
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Test-time training of a tokenized policy on ChainWorld with
/// accumulative progress rewards.
#[derive(Debug, Parser)]
#[command(name = "chainttt", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides master_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory. Defaults to $CHAINTTT_OUTPUT_ROOT/<run> (or ./runs/<run>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Config override as dotted.key=value; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl From<Common> for RunOptions {
    fn from(c: Common) -> Self {
        RunOptions {
            config: c.config,
            seed: c.seed,
            out: c.out,
            overrides: c.overrides,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Table {
    Estimator,
    Horizon,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Behavior cloning from scripted demonstrations.
    Pretrain(Common),
    /// Test-time training from BC (or from --params).
    Ttt {
        #[command(flatten)]
        common: Common,
        /// Initial params instead of running BC.
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Greedy success rate of a params file.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        params: PathBuf,
    },
    /// Estimator F-scores on balanced validation sets.
    CriticBench {
        #[command(flatten)]
        common: Common,
        /// Comma-separated seeds; defaults to five starting at master_seed.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// End-to-end ablation table.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "estimator")]
        table: Table,
        /// Comma-separated seeds; defaults to five starting at master_seed.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Pretrain(c) => commands::pretrain(&c.into()),
        Command::Ttt { common, params } => commands::run_ttt(&common.into(), params.as_deref()),
        Command::Eval { common, params } => commands::eval(&common.into(), &params),
        Command::CriticBench { common, seeds } => {
            commands::critic_bench(&common.into(), seeds.as_deref())
        }
        Command::Ablate {
            common,
            table,
            seeds,
        } => {
            let table = match table {
                Table::Estimator => AblationTable::Estimator,
                Table::Horizon => AblationTable::Horizon,
            };
            commands::ablate(&common.into(), table, seeds.as_deref())
        }
    };
    match result {
        Ok(text) => {
            if !text.is_empty() {
                println!("{}", text);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
