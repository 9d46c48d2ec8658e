//! `tabseq` subcommands. Each input file is handled on its own; a failure is
//! reported on that file's line and reflected in the exit code without
//! stopping the batch.
//!
//! Per-file lines go to stdout as tab-separated `command status path detail`.
//! The summary goes to stderr.

mod commands;
mod inputs;
mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use inputs::expand_inputs;
pub use output::{Outcome, Status};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FILE_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "tabseq", version, about = "Convert GuitarPro 5 tablature to and from event tokens")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Files, directories (searched recursively) or glob patterns.
    #[arg(required = true)]
    pub inputs: Vec<String>,
    #[arg(short, long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Replace existing output files.
    #[arg(long)]
    pub force: bool,
    /// Suppress per-file lines.
    #[arg(short, long)]
    pub quiet: bool,
    /// Worker threads; 0 picks one per core.
    #[arg(short, long, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// GP5 files to `<name>.tokens.txt`.
    Encode {
        #[command(flatten)]
        common: Common,
        /// Write repeated measures out in full instead of `measure:repeat`.
        #[arg(long)]
        no_measure_repeat: bool,
        /// Fail a file when the reader had to skip or repair anything.
        #[arg(long)]
        strict: bool,
    },
    /// Token files to `<name>.gp5`.
    Decode {
        #[command(flatten)]
        common: Common,
    },
    /// Encode, decode and compare each GP5 file. Writes nothing.
    Roundtrip {
        #[command(flatten)]
        common: Common,
    },
    /// Grammar-error counts per token file, aggregated into `errors.json`.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Treat any counted error as a file failure.
        #[arg(long)]
        strict: bool,
    },
    /// Corpus statistics to `stats.json` and `stats_<histogram>.csv`.
    Stats {
        #[command(flatten)]
        common: Common,
        /// Entries kept in the token-frequency histogram.
        #[arg(long, default_value_t = 50)]
        top: usize,
    },
    /// Unique token spellings to `vocab.txt`.
    Vocab {
        #[command(flatten)]
        common: Common,
    },
    /// Genre tags for the artist and title of each GP5 file, to `genres.jsonl`.
    Genres {
        #[command(flatten)]
        common: Common,
        /// Cache file; defaults to `genres-cache.jsonl` in the output directory.
        #[arg(long)]
        cache: Option<PathBuf>,
        /// JSON list of `{artist, title, genres}` answered offline instead
        /// of the catalog.
        #[arg(long)]
        stub: Option<PathBuf>,
        /// Request ceiling per second across all workers.
        #[arg(long, default_value_t = 5.0)]
        rate: f64,
    },
}

impl Command {
    pub fn common(&self) -> &Common {
        match self {
            Command::Encode { common, .. }
            | Command::Decode { common }
            | Command::Roundtrip { common }
            | Command::Validate { common, .. }
            | Command::Stats { common, .. }
            | Command::Vocab { common }
            | Command::Genres { common, .. } => common,
        }
    }
}

/// Runs one subcommand and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let common = cli.command.common();
    if let Err(e) = std::fs::create_dir_all(&common.out_dir) {
        eprintln!("error: cannot create {}: {e}", common.out_dir.display());
        return EXIT_FILE_FAILURE;
    }
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(common.jobs).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: worker pool: {e}");
            return EXIT_USAGE;
        }
    };
    let outcomes = match pool.install(|| commands::dispatch(&cli.command)) {
        Ok(o) => o,
        Err(msg) => {
            eprintln!("error: {msg}");
            return EXIT_USAGE;
        }
    };
    output::report(&outcomes, common.quiet)
}
