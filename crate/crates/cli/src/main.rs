//! `raman`: command-line frontend for the Raman quantum memory toolkit.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure,
//! 4 I/O failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use raman_core::config::RunConfig;
use raman_core::Error;

pub const ENV_PREFIX: &str = "RAMAN_";

#[derive(Parser, Debug)]
#[command(name = "raman", version, about = "Raman quantum memory simulation and optimization")]
struct Cli {
    /// JSON configuration file; missing keys take reference defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Override a config key by dotted path, e.g. `--set memory.d=1200`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Store the input pulse with a write control.
    Store {
        /// Input envelope CSV on the write window (default: config input).
        #[arg(long)]
        input: Option<PathBuf>,
        /// Write control CSV on the write window (default: config control).
        #[arg(long)]
        control: Option<PathBuf>,
    },
    /// Retrieve a stored spin wave with the read control.
    Retrieve {
        /// Spin-wave CSV over z in [0, 1] (default: store the config input first).
        #[arg(long)]
        spin: Option<PathBuf>,
        /// Read control CSV (default: config read pulse).
        #[arg(long)]
        read: Option<PathBuf>,
    },
    /// Shape the optimal write pulse for the configured input.
    Optimize,
    /// Run the parameter sweep described by the `sweep` block.
    Sweep,
    /// Simulated homodyne tomography of a coherent state through the memory.
    Tomo,
    /// Headline figures of merit next to published values.
    Report,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) | Error::Csv(_) => 4,
        e if e.is_numerical() => 3,
        Error::NoPeak => 3,
        _ => 2,
    }
}

fn parse_overrides(raw: &[String]) -> Result<Vec<(String, String)>, Error> {
    raw.iter()
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.to_string()))
                .ok_or_else(|| Error::Parse(format!("override `{kv}` is not KEY=VALUE")))
        })
        .collect()
}

fn load_config(cli: &Cli) -> Result<RunConfig, Error> {
    let mut overrides = parse_overrides(&cli.overrides)?;
    if let Some(seed) = cli.seed {
        overrides.push(("seed".into(), seed.to_string()));
    }
    if let Some(dir) = &cli.output_dir {
        overrides.push(("output_dir".into(), serde_json::to_string(dir).map_err(Error::Json)?));
    }
    RunConfig::load(cli.config.as_deref(), std::env::vars(), ENV_PREFIX, &overrides)
}

fn run(cli: &Cli) -> Result<Vec<PathBuf>, (u8, Error)> {
    let cfg = load_config(cli).map_err(|e| (if e.is_io() { 4 } else { 2 }, e))?;
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .map_err(|e| (2, Error::param("jobs", e.to_string())))?;
    }
    let result = match &cli.command {
        Command::Store { input, control } => commands::store(&cfg, input.as_deref(), control.as_deref()),
        Command::Retrieve { spin, read } => commands::retrieve(&cfg, spin.as_deref(), read.as_deref()),
        Command::Optimize => commands::optimize(&cfg),
        Command::Sweep => commands::sweep(&cfg),
        Command::Tomo => commands::tomo(&cfg),
        Command::Report => commands::report(&cfg),
    };
    result.map_err(|e| (exit_code(&e), e))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err((code, e)) => {
            eprintln!("error: {e}");
            ExitCode::from(code)
        }
    }
}
