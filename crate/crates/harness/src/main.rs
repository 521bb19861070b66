use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stackdyn_harness::config::{parse_config, parse_run_config, read_value};
use stackdyn_harness::{execute, sweep, task_field, HarnessError, HarnessResult, Outcome};

#[derive(Parser)]
#[command(name = "stackdyn", version, about = "Learning dynamics and equilibria of leader-follower games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the task named in the config.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Sample the config's vector field on a 2-D grid.
    Field {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every cell of the config's parameter grid.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn dispatch(cmd: &Command) -> HarnessResult<Outcome> {
    match cmd {
        Command::Run { config, out, seed } => {
            let value = read_value(config)?;
            let cfg = parse_run_config(&value)?;
            execute(&value, &cfg, cfg.base_seed(*seed), &cfg.out_dir(out.as_deref()))
        }
        Command::Field { config, out } => {
            let cfg = parse_config(&read_value(config)?, &["field"])?;
            task_field(&cfg, &cfg.out_dir(out.as_deref()))
        }
        Command::Sweep { config, out, seed } => {
            let value = read_value(config)?;
            let cfg = parse_config(&value, &["sweep"])?;
            sweep(&value, cfg.base_seed(*seed), &cfg.out_dir(out.as_deref()))
        }
    }
}

fn fail(e: &HarnessError) -> ExitCode {
    let report = serde_json::to_string(&e.report()).unwrap_or_else(|_| format!("{{\"message\":{:?}}}", e.to_string()));
    eprintln!("{report}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    match dispatch(&cli.command) {
        Ok(outcome) => {
            for p in &outcome.artifacts {
                println!("{}", Path::new(p).display());
            }
            match outcome.numerical_failure {
                Some(msg) => fail(&HarnessError::Numerical(msg)),
                None => ExitCode::SUCCESS,
            }
        }
        Err(e) => fail(&e),
    }
}
