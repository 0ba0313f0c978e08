//! `precondforge`: corpus-to-NLI weak-supervision pipeline.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use precondforge_core::corpus::CorpusFormat;
use precondforge_core::Error;

use config::Backend;

#[derive(Debug, Parser)]
#[command(name = "precondforge", version, about = "Weak-supervision pipeline for precondition inference")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Pipeline configuration file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Global seed; overrides the config file and PRECONDFORGE_SEED.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Fill-mask service URL; overrides the config file and PRECONDFORGE_SERVICE_URL.
    #[arg(long, global = true)]
    pub service_url: Option<String>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Manifest path; defaults to `<first output>.manifest.json`.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct CorpusArgs {
    /// Corpus files; repeat or comma-separate.
    #[arg(long, value_delimiter = ',')]
    pub corpus: Vec<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Corpus name stamped on every statement.
    #[arg(long)]
    pub source: Option<String>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum FormatArg {
    Text,
    Jsonl,
}

impl From<FormatArg> for CorpusFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Text => CorpusFormat::Text,
            FormatArg::Jsonl => CorpusFormat::Jsonl,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RegistryArgs {
    /// `builtin` or a registry TOML file.
    #[arg(long)]
    pub registry: Option<String>,
    /// Enable exactly the LFs with precision at or above this value.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// LF ids to enable regardless of the threshold; repeat or comma-separate.
    #[arg(long, value_delimiter = ',')]
    pub enable: Vec<String>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Label statements with the pattern LFs and extract action/precondition pairs.
    Extract {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        registry: RegistryArgs,
        #[arg(long, value_enum)]
        tagger: Option<Backend>,
        /// Keep interrogative statements.
        #[arg(long)]
        keep_questions: bool,
        /// Keep preconditions without a verb.
        #[arg(long)]
        no_verb_filter: bool,
        #[arg(long)]
        out: PathBuf,
        /// Also write the run counters as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Mask-and-fill augmentation of extraction records.
    Augment {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        tagger: Option<Backend>,
        #[arg(long, value_enum)]
        filler: Option<Backend>,
        #[arg(long)]
        per_mask: Option<usize>,
        #[arg(long)]
        per_statement: Option<usize>,
        #[arg(long)]
        placeholder: Option<String>,
    },
    /// Conjunction-masked records for biased masked-LM training.
    Maskprep {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        placeholder: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Convert a dataset into NLI records.
    Convert {
        #[arg(long, value_enum)]
        task: commands::Task,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Assign train/dev/test splits to NLI records.
    Split {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Train, dev and test fractions.
        #[arg(long, value_parser = parse_ratios)]
        ratios: Option<[f64; 3]>,
    },
    /// Coverage, overlap and conflict statistics of the label matrix.
    Stats {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        registry: RegistryArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Aggregate the matrix into one label per statement.
        #[arg(long, value_parser = parse_strategy)]
        aggregate: Option<precondforge_core::labelmodel::Strategy>,
        /// Where aggregated labels go (requires --aggregate).
        #[arg(long, requires = "aggregate")]
        labels_out: Option<PathBuf>,
    },
    /// PABI informativeness from rates or label files; prints the score ×100.
    Pabi {
        #[arg(long, default_value_t = 2)]
        labels: u32,
        #[arg(long, conflicts_with_all = ["eta1", "predictions", "zero_rate"])]
        eta: Option<f64>,
        #[arg(long, requires = "eta2")]
        eta1: Option<f64>,
        #[arg(long, requires = "eta1")]
        eta2: Option<f64>,
        /// Predicted labels, line-delimited {record_id, label}.
        #[arg(long, requires = "gold", conflicts_with = "zero_rate")]
        predictions: Option<PathBuf>,
        /// Gold labels, line-delimited {record_id, label}.
        #[arg(long)]
        gold: Option<PathBuf>,
        /// Use the majority-class baseline as the prediction.
        #[arg(long, requires = "gold")]
        zero_rate: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print or write the pattern registry.
    RegistryExport {
        #[command(flatten)]
        registry: RegistryArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run a manifest into a scratch directory and compare output digests.
    Replay {
        manifest: PathBuf,
        /// Keep replayed outputs here instead of a temporary directory.
        #[arg(long)]
        into: Option<PathBuf>,
    },
}

fn parse_strategy(s: &str) -> Result<precondforge_core::labelmodel::Strategy, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Configuration 2, I/O 3, data or contract 4, replay mismatch 5.
pub fn exit_code(e: &commands::CliError) -> u8 {
    match e {
        commands::CliError::Mismatch(_) => 5,
        commands::CliError::Core(e) => match e {
            Error::Config(_) => 2,
            Error::Io { .. } | Error::Transport { .. } => 3,
            _ => 4,
        },
    }
}

fn parse_ratios(s: &str) -> Result<[f64; 3], String> {
    let parts = s.split(',').map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}"))).collect::<Result<Vec<_>, _>>()?;
    parts.try_into().map_err(|p: Vec<f64>| format!("expected three comma-separated ratios, got {}", p.len()))
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let cli = Cli::parse();
    match commands::run(cli, &args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("precondforge: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
