//! `replyclass`: one subcommand per pipeline stage, each reading and writing
//! artifacts in the work directory.
//!
//! Exit status is 0 on success, 1 for usage and configuration errors, 2 for
//! data errors (missing or stale upstream artifacts, malformed inputs).

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub mod artifacts;
pub mod commands;
pub mod config;

pub use config::PipelineConfig;

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Data(m) => f.write_str(m),
        }
    }
}

impl From<replyclass_core::Error> for Failure {
    fn from(e: replyclass_core::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "replyclass", version, about = "Build a curated response label space and a suggestion model from dialogue logs")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// TOML pipeline config (default ./replyclass.toml if present); defaults
    /// apply to anything not set.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed everywhere it is used.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 1 runs every stage sequentially.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Accept upstream artifacts produced under a different config.
    #[arg(long, global = true)]
    pub force: bool,
    /// Overrides `paths.work_dir`.
    #[arg(long, global = true)]
    pub work_dir: Option<PathBuf>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Normalise and deduplicate doctor responses.
    Ingest {
        /// Conversation JSONL; overrides `paths.corpus`.
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Encode every response with each configured encoder.
    Embed,
    /// Union of k-nearest-neighbour pairs over all encoders.
    Candidates,
    /// Score candidate pairs and build the sparse distance matrix.
    Score,
    /// Complete-linkage clustering of the scored responses.
    Cluster,
    /// Run the merge service (and the suggestion endpoint when a model exists).
    Serve {
        #[arg(long)]
        bind: Option<String>,
        /// Directory with the built UI bundle.
        #[arg(long)]
        ui_dir: Option<PathBuf>,
    },
    /// Append merge actions derived from a known response→class mapping.
    ScriptMerge {
        /// JSON file as written by `synth` (truth.json).
        #[arg(long)]
        truth: PathBuf,
    },
    /// Replay the merge log and write the class catalog.
    ExportCatalog,
    /// Build (context, class) examples and the train/validation split.
    Dataset,
    /// Train the label-smoothed classifier.
    Train,
    /// Validation accuracy as a function of context length.
    AblateHistory {
        /// Comma-separated turn counts.
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,6")]
        turns: Vec<usize>,
    },
    /// Accuracy and risk-coverage on the validation split.
    Evaluate {
        /// Human judgment CSV (context_id, model, category a-d) to tabulate.
        #[arg(long)]
        judgments: Option<PathBuf>,
    },
    /// Suggest a response for a context, or opt out.
    Suggest {
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        /// A turn as `speaker: text`; repeat in conversation order.
        #[arg(long = "turn")]
        turns: Vec<String>,
        /// JSON array of {speaker, text} turns.
        #[arg(long, conflicts_with = "turns")]
        context: Option<PathBuf>,
    },
    /// Per-model judgment percentages from a judgment CSV.
    TabulateJudgments {
        #[arg(long)]
        judgments: PathBuf,
    },
    /// Compare label-space construction procedures.
    CompareProcedures {
        /// JSON array of procedure runs.
        #[arg(long)]
        runs: PathBuf,
    },
    /// Write the seeded synthetic corpus, word vectors, truth file and config.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        conversations: usize,
        #[arg(long, default_value_t = 32)]
        vector_dim: usize,
        #[arg(long, default_value_t = 11)]
        vector_seed: u64,
    },
}

/// Parses `args` and runs the subcommand; returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match commands::dispatch(cli) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {f}");
            f.exit_code()
        }
    }
}
