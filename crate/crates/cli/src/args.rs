use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use storyeval::probes::TiePolicy;
use storyeval::relatedness::PcScope;

#[derive(Debug, Parser)]
#[command(name = "storyeval", version, about = "Evaluate generated stories against human baselines")]
pub struct Cli {
    /// Global seed; every random choice in a run derives from it.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,

    /// Worker threads (defaults to one per core).
    #[arg(long, global = true, value_parser = clap::value_parser!(u32).range(1..))]
    pub workers: Option<u32>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-record metrics and an aggregate report.
    Eval(EvalArgs),
    /// Run one diagnostic probe.
    Probe(ProbeArgs),
    /// Sample stories from an n-gram model at each k.
    Gen(GenArgs),
    /// Train an n-gram model on prompt/story pairs.
    TrainNgram(TrainArgs),
    /// Cut human stories to the standard length.
    Baseline(BaselineArgs),
    /// Aggregate per-record metrics into CSV and SVG.
    Report(ReportArgs),
    /// Write the bundled synthetic corpus and its resources.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct Input {
    /// Record file (JSON lines); repeatable.
    #[arg(long = "input", required = true)]
    pub input: Vec<PathBuf>,

    /// Drop invalid records with a warning instead of failing.
    #[arg(long)]
    pub skip_invalid: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub input: Input,

    /// Directory holding embeddings, unigrams, concreteness and stopwords.
    #[arg(long, env = "STORYEVAL_RESOURCES")]
    pub resources: Option<PathBuf>,

    #[arg(long)]
    pub out: PathBuf,

    /// N-gram model used for `model_logprob`.
    #[arg(long)]
    pub model: Option<PathBuf>,

    #[arg(long, default_value = "model-k")]
    pub pc_scope: PcScope,

    #[arg(long, default_value_t = 1e-3)]
    pub sif_a: f64,

    /// Count proper nouns towards noun concreteness.
    #[arg(long)]
    pub include_propn: bool,

    /// Leave auxiliaries out of verb concreteness.
    #[arg(long)]
    pub exclude_aux: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProbeKind {
    Rank,
    Swap,
    Confidence,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    pub kind: ProbeKind,

    #[command(flatten)]
    pub input: Input,

    #[arg(long)]
    pub out: PathBuf,

    /// Score with a trained n-gram model.
    #[arg(long, group = "source")]
    pub model: Option<PathBuf>,

    /// Score from a stored score table (JSON lines of key and score).
    #[arg(long, group = "source")]
    pub scores: Option<PathBuf>,

    /// Score with the chance-level random scorer.
    #[arg(long, group = "source")]
    pub random: bool,

    #[arg(long, default_value = "strict")]
    pub tie_policy: TiePolicy,
}

/// A sampling width: a number, or `V`/`full` for the whole vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KSpec {
    Fixed(usize),
    Full,
}

impl KSpec {
    pub fn resolve(self, vocab_size: usize) -> usize {
        match self {
            KSpec::Fixed(k) => k,
            KSpec::Full => vocab_size,
        }
    }
}

fn parse_k(s: &str) -> Result<KSpec, String> {
    match s {
        "V" | "full" => Ok(KSpec::Full),
        _ => match s.parse::<usize>() {
            Ok(0) => Err("k must be at least 1".into()),
            Ok(k) => Ok(KSpec::Fixed(k)),
            Err(_) => Err(format!("`{s}` is neither a number nor V/full")),
        },
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Trained n-gram model.
    #[arg(long)]
    pub model: PathBuf,

    /// Records whose prompts are continued.
    #[arg(long)]
    pub prompts: PathBuf,

    /// Comma-separated k values; `V` means the full vocabulary.
    #[arg(long, value_delimiter = ',', value_parser = parse_k, default_value = "1,2,20,V")]
    pub k: Vec<KSpec>,

    #[arg(long)]
    pub out: PathBuf,

    /// Model name written into each record.
    #[arg(long, default_value = "ngram")]
    pub name: String,

    #[arg(long, default_value_t = storyeval::STORY_WORDS)]
    pub length: usize,

    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,

    /// Resource directory; its tags.tsv, if present, annotates the output.
    #[arg(long, env = "STORYEVAL_RESOURCES")]
    pub resources: Option<PathBuf>,

    #[arg(long)]
    pub skip_invalid: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub input: Input,

    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u32).range(1..))]
    pub order: u32,

    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[command(flatten)]
    pub input: Input,

    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// metrics.jsonl written by `eval`; repeatable.
    #[arg(long = "input", required = true)]
    pub input: Vec<PathBuf>,

    #[arg(long)]
    pub out: PathBuf,

    /// Only plot these metrics (default: all).
    #[arg(long)]
    pub metric: Vec<String>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,

    #[arg(long, default_value_t = storyeval::synthetic::TRAIN_TOKENS)]
    pub train_tokens: usize,

    #[arg(long, default_value_t = 100)]
    pub n_test: usize,
}
