//! `mailtriage`: drives ingestion, feature building, training, prediction,
//! evaluation and the assist service from the shell.
//!
//! Data goes to stdout, diagnostics to stderr. Usage errors exit with 2,
//! runtime errors with 1 after printing one JSON line on stderr.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "mailtriage", version, about = "E-mail triage: classify requests into answer categories")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Flat TOML settings file.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Seed for every random choice (folds, shuffles, initialization, synthesis).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Corpus store directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub store: Option<PathBuf>,
    /// Directory with lexicon.tsv, stopwords.txt, wh_particles.txt, negation_particles.txt.
    #[arg(long, global = true, value_name = "DIR")]
    pub resources: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct TextInput {
    /// Text to process.
    #[arg(long, conflicts_with = "file")]
    pub text: Option<String>,
    /// Read the text from a file (`-` for stdin, also the default).
    #[arg(long, value_name = "FILE")]
    pub file: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load documents (JSONL or CSV) and optionally categories into the store.
    Ingest {
        #[arg(value_name = "FILE")]
        input: PathBuf,
        /// Input format; guessed from the extension when omitted.
        #[arg(long)]
        format: Option<String>,
        /// Categories JSONL to upsert before the documents.
        #[arg(long, value_name = "FILE")]
        categories: Option<PathBuf>,
    },
    /// Per-category counts, learnable set and coverage.
    Stats {
        #[arg(long)]
        min_docs: Option<usize>,
    },
    /// Run one preprocessing mode over a text and print the extracted items.
    Extract {
        #[arg(long)]
        mode: Option<String>,
        #[command(flatten)]
        input: TextInput,
    },
    /// Build the relevancy vector over the learnable snapshot.
    BuildFeatures {
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        top_k: Option<usize>,
        #[arg(long)]
        min_docs: Option<usize>,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Train a classifier bundle over the learnable snapshot.
    Train {
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        family: Option<String>,
        /// Hyperparameter override, e.g. `k=3` or `lambda=0.001`.
        #[arg(long = "param", value_name = "KEY=VALUE")]
        params: Vec<String>,
        #[arg(long)]
        top_k: Option<usize>,
        #[arg(long)]
        min_docs: Option<usize>,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Rank categories for a text with a trained bundle.
    Predict {
        #[arg(long, value_name = "FILE")]
        model: Option<PathBuf>,
        #[command(flatten)]
        input: TextInput,
        /// Number of ranked categories to print.
        #[arg(long, default_value_t = 5)]
        top: usize,
        #[arg(long)]
        json: bool,
    },
    /// Cross-validate modes x families and print the result table.
    Evaluate {
        /// Evaluate a synthetic corpus instead of the store.
        #[arg(long)]
        preset: Option<String>,
        /// Comma-separated preprocessing modes.
        #[arg(long, value_delimiter = ',')]
        modes: Vec<String>,
        /// Comma-separated learner families.
        #[arg(long, value_delimiter = ',')]
        families: Vec<String>,
        /// Hyperparameter override for one family, e.g. `knn.k=3`.
        #[arg(long = "param", value_name = "FAMILY.KEY=VALUE")]
        params: Vec<String>,
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long)]
        top_k: Option<usize>,
        #[arg(long)]
        min_docs: Option<usize>,
        /// Report format written to --out: json, csv or text.
        #[arg(long, default_value = "json")]
        format: String,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Write a synthetic corpus as a store directory.
    Synth {
        #[arg(long, default_value = "paper-shape")]
        preset: String,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Run the HTTP assist service.
    Serve {
        #[arg(long)]
        bind: Option<String>,
        #[arg(long)]
        port: Option<u16>,
        #[arg(long, value_name = "FILE")]
        model: Option<PathBuf>,
    },
    /// Retrain and publish a new model version, offline or on a running service.
    Relearn {
        /// Base URL of a running service; without it the saved bundle is rebuilt.
        #[arg(long)]
        url: Option<String>,
        #[arg(long, value_name = "FILE")]
        model: Option<PathBuf>,
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        family: Option<String>,
        #[arg(long = "param", value_name = "KEY=VALUE")]
        params: Vec<String>,
        #[arg(long)]
        min_docs: Option<usize>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json_line());
            ExitCode::from(e.exit_code())
        }
    }
}
