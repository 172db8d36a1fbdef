use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Clone, Parser)]
#[command(name = "ppsynth", version, about = "Synthesize, fit and score probabilistic programs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Fit one model file and score it.
    Eval(EvalArgs),
    /// Generate models for a dataset and keep the reliable ones.
    Synth(SynthArgs),
    /// Recompute diagnostics from a draws dump.
    Diagnose(DiagnoseArgs),
    /// Print the modeling language grammar and the distribution table.
    Grammar,
    /// Print a dataset in the dataset-file format.
    Dataset {
        /// Builtin name or path to a dataset file.
        source: String,
    },
}

#[derive(Debug, Clone, Args)]
pub struct SamplerArgs {
    /// Seed for every random choice; drawn and printed when absent.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 4)]
    pub chains: usize,
    /// Post-warmup draws per chain.
    #[arg(long, default_value_t = 1000)]
    pub draws: usize,
    /// Warmup iterations per chain.
    #[arg(long, default_value_t = 1000)]
    pub tune: usize,
    #[arg(long, default_value_t = 0.8)]
    pub target_accept: f64,
    /// Minimum reliability score (0 to 7) for a model to count as reliable.
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u8).range(0..=7))]
    pub zeta: u8,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Model program file.
    #[arg(long)]
    pub model: PathBuf,
    /// Builtin dataset name or dataset file.
    #[arg(long)]
    pub dataset: String,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the posterior draws for `diagnose`.
    #[arg(long)]
    pub dump_draws: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GeneratorKind {
    /// Token-level sampler driven by a built-in heuristic scorer.
    Builtin,
    /// Chat-completions endpoint.
    Http,
    /// Fragments replayed from --mock-script.
    Mock,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub dataset: String,
    #[arg(long, value_enum, default_value_t = GeneratorKind::Builtin)]
    pub generator: GeneratorKind,
    /// Chat-completions URL for the http generator.
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Model name sent to the endpoint.
    #[arg(long, default_value = "default")]
    pub llm: String,
    /// Environment variable holding the endpoint's API key.
    #[arg(long)]
    pub api_key_env: Option<String>,
    /// Generator sampling temperature.
    #[arg(long)]
    pub temperature: Option<f64>,
    /// JSON file `{"prior": [...], "likelihood": [...]}` for the mock generator.
    #[arg(long)]
    pub mock_script: Option<PathBuf>,
    /// Response column for the builtin generator.
    #[arg(long)]
    pub response: Option<String>,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    /// Rejection budget.
    #[arg(long, default_value_t = 100)]
    pub r_max: usize,
    /// Likelihood resamples allowed before prior resampling [default: 2,
    /// or --r-max when that is smaller].
    #[arg(long)]
    pub alpha: Option<usize>,
    /// Reliable models to collect before stopping.
    #[arg(long, default_value_t = 4)]
    pub beta: usize,
    /// Report path. The best program goes next to it with a `.ppl` extension.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run record (JSON lines). Defaults to the report path with `.jsonl`.
    #[arg(long)]
    pub record: Option<PathBuf>,
    /// Run this many consecutive seeds starting at --seed.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub seeds: u64,
}

#[derive(Debug, Clone, Args)]
pub struct DiagnoseArgs {
    /// Draws dump written by `eval --dump-draws`.
    #[arg(long)]
    pub draws: PathBuf,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u8).range(0..=7))]
    pub zeta: u8,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
