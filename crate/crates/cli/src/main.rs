//! `flowpat`: generate, split, train, evaluate and sweep flow pattern
//! classifiers from the command line.

mod commands;
mod config;
mod outdir;
mod overrides;

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{CommandFactory, Parser, Subcommand};
use flowpat_core::{Error, FlowPattern, Result};

use config::RunConfig;
use outdir::OutputGuard;

#[derive(Debug, Parser)]
#[command(
    name = "flowpat",
    version,
    about = "Two-phase flow pattern classification from capacitance traces",
    after_help = "Any other --key.path VALUE option overrides the RunConfig field at that path, \
                  e.g. --models.train.epochs 5 or --split.protocol pattern_based."
)]
struct Cli {
    /// JSON run configuration; unspecified fields take their defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed; also seeds the synthetic generator.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic corpus.
    Synth,
    /// Convert a recorded trace CSV into a corpus experiment.
    Ingest {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        label: FlowPattern,
        #[arg(long, value_name = "DEG")]
        inclination: f64,
        /// Superficial gas velocity, m/s.
        #[arg(long, value_name = "M_PER_S")]
        u_gs: f64,
        /// Superficial liquid velocity, m/s.
        #[arg(long, value_name = "M_PER_S")]
        u_os: f64,
        /// Experiment id; defaults to the trace file stem.
        #[arg(long)]
        id: Option<String>,
    },
    /// Cut a corpus into train and eval windows.
    Split {
        #[arg(long, value_name = "DIR")]
        corpus: Option<PathBuf>,
    },
    /// Train `n_seeds` models on a split.
    Train {
        #[arg(long, value_name = "DIR")]
        split: Option<PathBuf>,
    },
    /// Evaluate trained models on a split's eval partition.
    Eval {
        #[arg(long, value_name = "DIR")]
        split: Option<PathBuf>,
        /// Output directory of `train`.
        #[arg(long, value_name = "DIR")]
        train: Option<PathBuf>,
        /// Evaluate even when config, split or checkpoint hashes disagree.
        #[arg(long)]
        force: bool,
    },
    /// Run the SENet hyperparameter grid.
    Sweep {
        #[arg(long, value_name = "DIR")]
        split: Option<PathBuf>,
    },
    /// Classify consecutive windows of a trace; CSV on stdout unless --out.
    Predict {
        /// Checkpoint file or `train` output directory.
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
        #[arg(long)]
        trace: PathBuf,
    },
    /// Welch power spectrum and sampling-rate estimate of a trace.
    Psd {
        #[arg(long)]
        trace: PathBuf,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Contract(_) => 2,
        Error::Numeric(_) | Error::Training { .. } => 4,
        _ => 3,
    }
}

fn kind(e: &Error) -> &'static str {
    match e {
        Error::Parse { .. } => "parse",
        Error::EmptyInput(_) => "empty_input",
        Error::Contract(_) => "contract",
        Error::Config(_) => "config",
        Error::InsufficientData { .. } => "insufficient_data",
        Error::Degenerate(_) => "degenerate",
        Error::Coverage(_) => "coverage",
        Error::Protocol(_) => "protocol",
        Error::Numeric(_) => "numeric",
        Error::Training { .. } => "training",
        Error::Io { .. } => "io",
        Error::Json(_) => "json",
    }
}

/// One JSON object on one line.
fn report(e: &Error) -> ExitCode {
    let code = exit_code(e);
    let line = serde_json::json!({
        "error": kind(e),
        "exit_code": code,
        "message": e.to_string(),
    });
    eprintln!("{line}");
    ExitCode::from(code)
}

fn known_flags() -> HashSet<String> {
    let root = Cli::command();
    let mut names: HashSet<String> = ["help", "version"].into_iter().map(String::from).collect();
    let mut visit = |cmd: &clap::Command| {
        names.extend(cmd.get_arguments().filter_map(|a| a.get_long()).map(String::from));
    };
    visit(&root);
    for sub in root.get_subcommands() {
        visit(sub);
    }
    names
}

fn init_threads() -> Result<()> {
    let Ok(raw) = std::env::var("FLOWPAT_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("FLOWPAT_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

fn out_dir(out: Option<&Path>) -> Result<&Path> {
    out.ok_or_else(|| Error::Config("--out is required".into()))
}

fn run(cli: Cli, cfg: RunConfig) -> Result<()> {
    let out = cli.out.as_deref();
    if let Command::Predict { checkpoint, trace } = &cli.command {
        let csv = commands::predict(&cfg, checkpoint, trace)?;
        return match out {
            Some(dir) => {
                let guard = OutputGuard::snapshot(dir);
                let result = std::fs::create_dir_all(dir)
                    .and_then(|_| std::fs::write(dir.join(commands::RUN_CONFIG), cfg.record()))
                    .and_then(|_| std::fs::write(dir.join("predictions.csv"), csv))
                    .map_err(|source| Error::Io {
                        path: dir.to_path_buf(),
                        source,
                    });
                if result.is_err() {
                    guard.rollback();
                }
                result
            }
            None => {
                print!("{csv}");
                Ok(())
            }
        };
    }
    let dir = out_dir(out)?;
    let guard = OutputGuard::snapshot(dir);
    let result = match &cli.command {
        Command::Synth => commands::synth(&cfg, dir),
        Command::Ingest {
            trace,
            label,
            inclination,
            u_gs,
            u_os,
            id,
        } => {
            let args = commands::IngestArgs {
                trace: trace.clone(),
                label: *label,
                inclination_deg: *inclination,
                u_gs_mps: *u_gs,
                u_os_mps: *u_os,
                id: id.clone(),
            };
            commands::ingest(&cfg, &args, dir)
        }
        Command::Split { corpus } => commands::split(&cfg, corpus.as_deref(), dir),
        Command::Train { split } => commands::train(&cfg, split.as_deref(), dir),
        Command::Eval { split, train, force } => commands::eval(&cfg, split.as_deref(), train.as_deref(), *force, dir),
        Command::Sweep { split } => commands::sweep(&cfg, split.as_deref(), dir),
        Command::Psd { trace } => commands::psd(&cfg, trace, dir),
        Command::Predict { .. } => unreachable!("handled above"),
    };
    if result.is_err() {
        guard.rollback();
    }
    result
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args: Vec<_> = std::env::args_os().collect();
    let (args, overrides) = match overrides::extract(args, &known_flags()) {
        Ok(v) => v,
        Err(e) => return report(&e),
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().find(|l| !l.trim().is_empty()).unwrap_or("invalid arguments");
            return report(&Error::Config(first.trim_start_matches("error: ").to_string()));
        }
    };
    if let Err(e) = init_threads() {
        return report(&e);
    }
    let cfg = match RunConfig::resolve(cli.config.as_deref(), &overrides, cli.seed) {
        Ok(c) => c,
        Err(e) => return report(&e),
    };
    match run(cli, cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(&e),
    }
}
