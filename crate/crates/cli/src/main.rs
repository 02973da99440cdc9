//! `cityometrics`: batch pipeline from affiliation records to city and
//! metro indicators.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::{cmd_compare, cmd_fixture, cmd_ingest, cmd_resolve, Session};
use crate::config::{Format, RunConfig};
use crate::error::CliError;

#[derive(Parser)]
#[command(
    name = "cityometrics",
    version,
    about = "City and metro-level scientometric indicators"
)]
struct Cli {
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, env = "CITYOMETRICS_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse corpus files into one validated corpus.
    Ingest {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        /// jsonl or csv; inferred from the extension otherwise.
        #[arg(long)]
        format: Option<String>,
    },
    /// Resolve reported localities against a gazetteer.
    Resolve {
        #[arg(long, required = true, num_args = 1..)]
        corpus: Vec<PathBuf>,
        #[arg(long)]
        gazetteer: PathBuf,
        #[arg(long)]
        aliases: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Build the configured partition.
    Delineate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Diff two partitions of one gazetteer.
    Compare {
        #[arg(long)]
        gazetteer: PathBuf,
        #[arg(long)]
        p1: PathBuf,
        #[arg(long)]
        p2: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Credit reports for every configured regime.
    Count {
        #[arg(long)]
        config: PathBuf,
    },
    /// Collaboration matrices, link expansions and intra-city matrices.
    Collab {
        #[arg(long)]
        config: PathBuf,
    },
    /// Ranked metro tables and the regime summary.
    Report {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        format: Option<String>,
    },
    /// Headquarters mismatch per institution.
    Mismatch {
        #[arg(long)]
        config: PathBuf,
    },
    /// Write a synthetic fixture and a run file for it.
    Fixture {
        #[arg(long)]
        profile: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// delineate, count, collab, report and mismatch in one go.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

fn usage(message: impl Into<String>) -> CliError {
    CliError::new("usage", message).exit(2)
}

fn dispatch(command: Command) -> Result<(), CliError> {
    let session = |name: &str, path: &PathBuf| RunConfig::load(path).and_then(|c| Session::open(name, c));
    match command {
        Command::Ingest { paths, out_dir, format } => {
            let format = format.map(|f| f.parse().map_err(usage)).transpose()?;
            cmd_ingest(&paths, &out_dir, format)
        }
        Command::Resolve {
            corpus,
            gazetteer,
            aliases,
            out_dir,
        } => cmd_resolve(&corpus, &gazetteer, aliases.as_deref(), &out_dir),
        Command::Delineate { config } => session("delineate", &config)?.delineate(),
        Command::Compare {
            gazetteer,
            p1,
            p2,
            out_dir,
        } => cmd_compare(&gazetteer, &p1, &p2, &out_dir),
        Command::Count { config } => session("count", &config)?.count(),
        Command::Collab { config } => session("collab", &config)?.collab(),
        Command::Report { config, format } => {
            let format: Option<Format> = format.map(|f| f.parse().map_err(usage)).transpose()?;
            session("report", &config)?.report(format)
        }
        Command::Mismatch { config } => session("mismatch", &config)?.mismatch(),
        Command::Fixture { profile, seed, out_dir } => cmd_fixture(&profile, seed, &out_dir),
        Command::Run { config } => session("run", &config)?.run(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = usage(e.kind().to_string()).details(vec![e.to_string().trim().to_string()]);
            eprintln!("{}", err.to_json());
            return ExitCode::from(2);
        }
    };
    let result = match cli.threads {
        Some(0) => Err(usage("--threads must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::new("threads", e.to_string())),
        None => Ok(()),
    }
    .and_then(|_| dispatch(cli.command));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code.clamp(1, 255) as u8)
        }
    }
}
