use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Token-level corpus editing, collapse simulation and corpus diagnostics.
///
/// Every option can also be set in the TOML file given by `--config`; flags
/// win over the file. Each run writes its outputs and a `manifest.toml` to
/// `--out-dir`, and `toedit replay <manifest>` reproduces them.
#[derive(Parser, Debug)]
#[command(name = "toedit", version)]
pub struct Cli {
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Global seed; per-document and per-trial streams derive from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads (default: all cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train an n-gram prior on a corpus.
    TrainPrior(TrainPriorArgs),
    /// Resample high-probability tokens of a corpus under a prior.
    Edit(EditArgs),
    /// Run the linear-model collapse and editing experiments.
    Simulate(SimulateArgs),
    /// Perplexity, token-probability, n-gram and coverage reports.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    /// Importance-weighted selection of raw documents toward a target corpus.
    SelectDsir(SelectDsirArgs),
    /// Build an α-mixture of human and synthetic documents.
    Mix(MixArgs),
    /// Re-run the command recorded in a manifest and check its outputs.
    Replay(ReplayArgs),
}

#[derive(Subcommand, Debug)]
pub enum AnalyzeCommand {
    Ppl(AnalyzePplArgs),
    Tokens(AnalyzeTokensArgs),
    Ngrams(AnalyzeNgramsArgs),
    Coverage(AnalyzeCoverageArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum FormatArg {
    Jsonl,
    Text,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum TokenizerArg {
    Whitespace,
    Byte,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum StrategyArg {
    TopK,
    TopP,
    Rejection,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModeArg {
    Collapse,
    Edit,
    Both,
}

#[derive(Args, Debug, Default)]
pub struct InputArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
}

#[derive(Args, Debug, Default)]
pub struct TokenizerArgs {
    #[arg(long, value_enum)]
    pub tokenizer: Option<TokenizerArg>,
    /// One token per line; selects the vocab-file tokenizer.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct PriorArgs {
    /// Prior file written by `train-prior`.
    #[arg(long)]
    pub prior: Option<PathBuf>,
    /// Remote prior endpoint; defaults to TOEDIT_PROVIDER_URL.
    #[arg(long)]
    pub remote: Option<String>,
    /// Context-free uniform prior over the tokenizer vocabulary.
    #[arg(long)]
    pub uniform: bool,
    #[arg(long)]
    pub timeout_secs: Option<u64>,
    #[command(flatten)]
    pub tokenizer: TokenizerArgs,
}

#[derive(Args, Debug)]
pub struct TrainPriorArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub tokenizer: TokenizerArgs,
    #[arg(long)]
    pub order: Option<usize>,
    #[arg(long)]
    pub discount: Option<f64>,
}

#[derive(Args, Debug)]
pub struct EditArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub prior: PriorArgs,
    /// Flag threshold; positions with P(x_i | x_<i) >= p are resampled.
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long, value_enum)]
    pub strategy: Option<StrategyArg>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub nucleus: Option<f64>,
    #[arg(long)]
    pub max_rejects: Option<usize>,
    #[arg(long)]
    pub fallback_k: Option<usize>,
    #[arg(long)]
    pub exclude_original: bool,
    #[arg(long)]
    pub generations: Option<usize>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long = "T")]
    pub t: Option<usize>,
    #[arg(long)]
    pub sigma2: Option<f64>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub generations: Option<usize>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub m1_size: Option<usize>,
    #[arg(long)]
    pub eta: Option<f64>,
    /// `unit_first_axis` or `random_unit`.
    #[arg(long)]
    pub w_star_mode: Option<String>,
}

#[derive(Args, Debug)]
pub struct AnalyzePplArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub prior: PriorArgs,
    #[command(flatten)]
    pub edges: PplEdgeArgs,
    /// Score fixed-size token chunks instead of whole documents.
    #[arg(long)]
    pub chunk: Option<usize>,
}

#[derive(Args, Debug, Default)]
pub struct PplEdgeArgs {
    #[arg(long)]
    pub ppl_max: Option<f64>,
    #[arg(long)]
    pub ppl_step: Option<f64>,
}

#[derive(Args, Debug)]
pub struct AnalyzeTokensArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub prior: PriorArgs,
}

#[derive(Args, Debug)]
pub struct NgramArgs {
    /// Comma-separated n-gram orders hashed into buckets.
    #[arg(long, value_delimiter = ',')]
    pub n_orders: Option<Vec<usize>>,
    #[arg(long)]
    pub buckets: Option<usize>,
    #[arg(long)]
    pub hash_seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct AnalyzeNgramsArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub tokenizer: TokenizerArgs,
    #[command(flatten)]
    pub ngrams: NgramArgs,
    /// Order of the exact top n-gram table.
    #[arg(long)]
    pub top_order: Option<usize>,
    #[arg(long)]
    pub top_n: Option<usize>,
}

#[derive(Args, Debug)]
pub struct AnalyzeCoverageArgs {
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long)]
    pub candidate: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    #[command(flatten)]
    pub prior: PriorArgs,
    #[command(flatten)]
    pub edges: PplEdgeArgs,
}

#[derive(Args, Debug)]
pub struct SelectDsirArgs {
    #[arg(long)]
    pub raw: Option<PathBuf>,
    #[arg(long)]
    pub target: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    #[command(flatten)]
    pub tokenizer: TokenizerArgs,
    #[command(flatten)]
    pub ngrams: NgramArgs,
    /// Number of documents to keep.
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Args, Debug)]
pub struct MixArgs {
    #[arg(long)]
    pub human: Option<PathBuf>,
    #[arg(long)]
    pub synthetic: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Human share of the mixture.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub target_size: Option<usize>,
}

#[derive(Args, Debug)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}

/// Rewrites the first `analyze-ppl` style argument to `analyze ppl`.
pub fn expand_aliases(args: Vec<String>) -> Vec<String> {
    let pos = args.iter().position(|a| {
        a.strip_prefix("analyze-")
            .is_some_and(|sub| matches!(sub, "ppl" | "tokens" | "ngrams" | "coverage"))
    });
    let Some(pos) = pos else { return args };
    let mut out = args;
    let sub = out[pos]["analyze-".len()..].to_string();
    out[pos] = "analyze".to_string();
    out.insert(pos + 1, sub);
    out
}
