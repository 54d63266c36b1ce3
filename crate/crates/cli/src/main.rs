mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use secmark::pipeline::ModelKind;
use secmark::Error;

use config::{EvalArgs, FeatureArgs, ModelArgs};

#[derive(Debug, Parser)]
#[command(name = "secmark", version, about = "Sentence section identification for Chinese medical papers")]
pub struct Cli {
    /// TOML run configuration; flags override its keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Global seed. Falls back to the config, then SECMARK_SEED, then 0.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for cross-validation folds.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Omit the timestamp line from text reports.
    #[arg(long, global = true)]
    pub no_timestamp: bool,
    /// Start from the published hyperparameter set.
    #[arg(long, global = true)]
    pub paper_defaults: bool,
    #[command(flatten)]
    pub paths: PathArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct PathArgs {
    /// Corpus file (JSON lines).
    #[arg(long, global = true)]
    pub corpus: Option<PathBuf>,
    /// Lexicon TSV: word, POS tag, frequency.
    #[arg(long, global = true)]
    pub lexicon: Option<PathBuf>,
    /// Entity dictionary TSV: surface, category.
    #[arg(long, global = true)]
    pub entities: Option<PathBuf>,
    /// Pretrained word vectors.
    #[arg(long, global = true)]
    pub embeddings: Option<PathBuf>,
    /// Output directory.
    #[arg(long, short = 'o', global = true)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split raw paragraphs into sentences and flag headings.
    Ingest,
    /// Segment and POS-tag every sentence.
    Segment,
    /// Fit the feature extractor and write sentence vectors.
    Featurize {
        #[command(flatten)]
        features: FeatureArgs,
    },
    /// Score features by information gain and apply a threshold.
    Select {
        #[command(flatten)]
        features: FeatureArgs,
    },
    /// Train one model on the whole corpus.
    Train {
        #[arg(long)]
        model: ModelKind,
        #[command(flatten)]
        features: FeatureArgs,
        #[command(flatten)]
        params: ModelArgs,
    },
    /// Label a corpus with a trained model.
    Predict {
        /// Model file written by `train`.
        #[arg(long)]
        model: PathBuf,
    },
    /// k-fold comparison of several models with paired t-tests.
    Evaluate {
        #[command(flatten)]
        eval: EvalArgs,
        #[command(flatten)]
        features: FeatureArgs,
        #[command(flatten)]
        params: ModelArgs,
    },
    /// Cross-validated scores across IG thresholds.
    Sweep {
        #[arg(long, default_value = "lr")]
        model: ModelKind,
        /// Comma-separated thresholds; defaults to the standard grid.
        #[arg(long, value_delimiter = ',')]
        thresholds: Vec<f64>,
        #[arg(long)]
        k: Option<usize>,
        #[command(flatten)]
        features: FeatureArgs,
        #[command(flatten)]
        params: ModelArgs,
    },
    /// Train skip-gram word vectors on the segmented corpus.
    Embed {
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        window: Option<usize>,
    },
    /// k-means over word vectors with a 2-D PCA projection.
    Cluster {
        #[arg(long, default_value_t = 10)]
        clusters: usize,
    },
    /// Dictionary entities per paper from target-labeled sentences.
    Extract {
        /// Use every sentence instead of Subject/Method/Result only.
        #[arg(long)]
        all: bool,
    },
    /// Paper-level co-occurrence networks, filtered and unfiltered.
    Cooccur {
        #[arg(long, value_delimiter = ',', default_values_t = [0, 2, 5, 10, 20])]
        thresholds: Vec<usize>,
    },
    /// Generate a labeled synthetic corpus and its lexicon.
    Synth {
        #[arg(long, default_value_t = 371)]
        docs: usize,
        #[arg(long)]
        signal_prob: Option<f64>,
        #[arg(long)]
        heading_prob: Option<f64>,
    },
}

fn error_kind(e: &Error) -> (&'static str, u8) {
    match e.root() {
        Error::Config(_) | Error::InvalidTransitions(_) => ("config", 1),
        Error::Numerical(_) | Error::Shape { .. } => ("numerical", 3),
        Error::Io { .. } => ("io", 2),
        Error::Format(_) => ("format", 2),
        _ => ("data", 2),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error[usage]: {first}");
            return ExitCode::from(1);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (kind, code) = error_kind(&e);
            let msg = e.to_string().replace(['\n', '\r'], " ");
            eprintln!("error[{kind}]: {msg}");
            ExitCode::from(code)
        }
    }
}
