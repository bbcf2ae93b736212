//! `qpfk` command-line front end.
//!
//! Exit codes: 0 success, 1 invalid config or usage, 2 numerical failure
//! (a `failure.json` record is written), 3 I/O error.

// negated comparisons also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use config::RunConfig;
use error::CliError;
use output::{Output, Provenance};

#[derive(Debug, Parser)]
#[command(
    name = "qpfk",
    version,
    about = "Hull functions of quasi-periodic Frenkel-Kontorova models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory; overrides `output.dir` of the config.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true, value_name = "K")]
    threads: Option<usize>,
    /// Log filter, e.g. `info` or `qpfk=debug`.
    #[arg(long, global = true, default_value = "warn")]
    log_level: String,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve for the hull function from ĥ = 0.
    Solve,
    /// Expand the Lindstedt series and score its truncation.
    Lindstedt,
    /// Continue in the force amplitude along `[ramp]`.
    Continue,
    /// Bracket the breakdown amplitude.
    Bisect,
    /// Check the step identities at a stored state.
    Verify {
        /// Coefficient dump to check (default: `h.dump` in the output directory).
        #[arg(long, value_name = "PATH")]
        state: Option<PathBuf>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Lindstedt => "lindstedt",
            Command::Continue => "continue",
            Command::Bisect => "bisect",
            Command::Verify { .. } => "verify",
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Usage("--config PATH is required".into()))?;
    let cfg = RunConfig::load(path)?;
    if let Some(k) = cli.threads {
        if k == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let provenance = Provenance {
        tool: "qpfk",
        version: env!("CARGO_PKG_VERSION"),
        command: cli.command.name().into(),
        config_sha256: cfg.hash(),
        seed: cfg.seed,
        threads: rayon::current_num_threads(),
    };
    let dir = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    let out = Output::new(dir, cfg.output.prefix.clone(), provenance)?;
    // a failure record from an earlier run would be misleading
    let stale = out.path("failure.json");
    if stale.exists() {
        std::fs::remove_file(&stale).map_err(|e| CliError::io(&stale, e))?;
    }
    let result = match &cli.command {
        Command::Solve => commands::solve(&cfg, &out),
        Command::Lindstedt => commands::lindstedt(&cfg, &out),
        Command::Continue => commands::continuation(&cfg, &out),
        Command::Bisect => commands::bisect(&cfg, &out),
        Command::Verify { state } => {
            let state = state.clone().unwrap_or_else(|| out.path("h.dump"));
            commands::verify(&cfg, &out, &state)
        }
    };
    if let Err(CliError::Numerical { kind, msg, detail }) = &result {
        let record = json!({ "kind": kind, "message": msg, "detail": detail });
        if let Err(e) = out.json("failure.json", record) {
            log::error!("could not write failure record: {e}");
        }
    }
    result
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::new()
        .parse_filters(&cli.log_level)
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
