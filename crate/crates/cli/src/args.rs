use std::fmt;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use claim_match::corpus::Source;
use claim_match::matcher::PositiveClass;

use crate::provider::ProviderSpec;

#[derive(Debug, Parser)]
#[command(name = "claim-match", version, about = "Multilingual claim matching toolkit", arg_required_else_help = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Scrub and normalize raw messages into a corpus file.
    Ingest(IngestArgs),
    /// Build a BM25 index over a corpus.
    Index(IndexArgs),
    /// Embed a corpus and write an embedding file.
    Embed(EmbedArgs),
    /// Rank corpus candidates for one message and report the policy band.
    Query(QueryArgs),
    /// Retrieval metrics (MRR, MFR, HasPositive@K) for BM25 and BM25 + rerank.
    EvalIr(EvalIrArgs),
    /// Cross-validated cosine-threshold classifier over annotated pairs.
    EvalThreshold(EvalThresholdArgs),
    /// Cross-validated AdaBoost pair classifier over a balanced pair set.
    EvalClassifier(EvalClassifierArgs),
    /// Gaussian-stratified pair sample for annotation.
    SamplePairs(SamplePairsArgs),
    /// Randolph's free-marginal kappa over annotation labels.
    Kappa(KappaArgs),
    /// Train a character n-gram student against a teacher on parallel text.
    Distill(DistillArgs),
    /// Single-link clustering of a corpus at a cosine threshold.
    Cluster(ClusterArgs),
    /// Run the HTTP matching service.
    Serve(ServeArgs),
    /// Render stored evaluation records as tables.
    Report(ReportArgs),
}

/// Provider spec: `file:<path>`, `remote:<url>` or `toy:<encoder snapshot>`.
#[derive(Debug, Args)]
pub struct ProviderArgs {
    /// Embedding provider (file:PATH, remote:URL, toy:SNAPSHOT).
    #[arg(long, env = "CLAIM_MATCH_PROVIDER")]
    pub provider: Option<ProviderSpec>,
    /// Replaces the URL of a remote provider, or selects one when --provider is absent.
    #[arg(long, env = "CLAIM_MATCH_PROVIDER_URL")]
    pub provider_url: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct Bm25Args {
    #[arg(long, default_value_t = 1.2)]
    pub k1: f64,
    #[arg(long, default_value_t = 0.75)]
    pub b: f64,
}

#[derive(Debug, Clone, Args)]
pub struct MatchArgs {
    /// BM25 retrieval depth before rerank.
    #[arg(long, default_value_t = 50)]
    pub depth: usize,
    /// Cosine at or above which a message joins the best candidate's cluster.
    #[arg(long, default_value_t = 0.95)]
    pub auto_threshold: f64,
    /// Cosine at or above which a candidate is sent for review.
    #[arg(long, default_value_t = 0.90)]
    pub suggest_threshold: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SourceArg {
    Tipline,
    PublicGroup,
    FactCheck,
}

impl From<SourceArg> for Source {
    fn from(s: SourceArg) -> Self {
        match s {
            SourceArg::Tipline => Source::Tipline,
            SourceArg::PublicGroup => Source::PublicGroup,
            SourceArg::FactCheck => Source::FactCheck,
        }
    }
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Message records, one JSON object per line.
    #[arg(long)]
    pub input: PathBuf,
    /// Source for records that do not name one.
    #[arg(long, value_enum, default_value_t = SourceArg::Tipline)]
    pub source: SourceArg,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[command(flatten)]
    pub bm25: Bm25Args,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[command(flatten)]
    pub provider: ProviderArgs,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    /// Message text to match.
    #[arg(long)]
    pub text: String,
    /// Candidate corpus; needed unless --index is given and the provider is keyed by id.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Prebuilt index; built from --corpus when absent.
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[command(flatten)]
    pub provider: ProviderArgs,
    #[command(flatten)]
    pub matching: MatchArgs,
    #[command(flatten)]
    pub bm25: Bm25Args,
}

#[derive(Debug, Args)]
pub struct EvalIrArgs {
    /// Queries: `{"id", "text", "relevant": [ids], "language"?}` per line.
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[command(flatten)]
    pub provider: ProviderArgs,
    #[arg(long, default_value_t = 50)]
    pub depth: usize,
    /// Rank assigned to queries with no relevant candidate when computing MFR.
    #[arg(long)]
    pub mfr_cap: Option<usize>,
    #[command(flatten)]
    pub bm25: Bm25Args,
    /// Column label for the reranked results; defaults to the provider name.
    #[arg(long)]
    pub label: Option<String>,
    /// Append evaluation records to this file.
    #[arg(long)]
    pub records: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalThresholdArgs {
    /// Annotated pairs, one JSON object per line.
    #[arg(long)]
    pub pairs: PathBuf,
    /// Texts for providers that embed text rather than look up ids.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[command(flatten)]
    pub provider: ProviderArgs,
    #[arg(long, default_value_t = PositiveClass::VerySimilar)]
    pub positive_class: PositiveClass,
    /// Also report precision, recall and F1 at this fixed threshold on all pairs.
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long, default_value_t = 0.01)]
    pub step: f64,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
    #[arg(long, default_value_t = 13)]
    pub seed: u64,
    /// Row label; languages in the pair file are evaluated separately too.
    #[arg(long, default_value = "All")]
    pub row: String,
    #[arg(long)]
    pub label: Option<String>,
    #[arg(long)]
    pub records: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalClassifierArgs {
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[command(flatten)]
    pub provider: ProviderArgs,
    #[arg(long, default_value_t = PositiveClass::VerySimilar)]
    pub positive_class: PositiveClass,
    /// Boosting rounds.
    #[arg(long, default_value_t = 100)]
    pub rounds: usize,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
    /// Seeds both the negative draw and the fold assignment.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Train on every pair and save the model here.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub label: Option<String>,
    #[arg(long)]
    pub records: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SamplePairsArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// One or more providers; each contributes its own stratified sample.
    #[arg(long = "provider", required = true, num_args = 1)]
    pub providers: Vec<ProviderSpec>,
    #[arg(long, default_value_t = 0.825)]
    pub mean: f64,
    #[arg(long, default_value_t = 0.1)]
    pub std: f64,
    #[arg(long, default_value_t = 100)]
    pub per_provider: usize,
    /// Uniformly random pairs added on top of the stratified ones.
    #[arg(long, default_value_t = 100)]
    pub random: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Collapse {
    /// Claim detection: yes/probably, no, wrong language.
    Task1,
    /// Claim similarity: very similar, not very similar, n/a.
    Task2,
}

#[derive(Debug, Args)]
pub struct KappaArgs {
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, value_enum)]
    pub collapse: Collapse,
}

#[derive(Debug, Args)]
pub struct DistillArgs {
    /// Tab-separated `source<TAB>target` lines.
    #[arg(long)]
    pub pairs: PathBuf,
    /// Teacher provider spec.
    #[arg(long)]
    pub teacher: ProviderSpec,
    /// Start from this student snapshot instead of a fresh encoder.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long, default_value_t = 16384)]
    pub buckets: usize,
    /// Initial weight scale of a fresh student; 0 starts from zeros.
    #[arg(long, default_value_t = 0.0)]
    pub init_scale: f64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.05)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[command(flatten)]
    pub provider: ProviderArgs,
    #[arg(long, default_value_t = 0.90)]
    pub threshold: f64,
    /// Only print clusters with at least this many members.
    #[arg(long, default_value_t = 2)]
    pub min_size: usize,
    /// Seed for the random representative.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write `id<TAB>cluster` assignments here.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// A value kept out of logs.
#[derive(Clone)]
pub struct Secret(pub String);

impl fmt::Debug for Secret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("<redacted>")
    }
}

impl FromStr for Secret {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(Secret(s.to_string()))
    }
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub data_dir: PathBuf,
    #[command(flatten)]
    pub provider: ProviderArgs,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    /// Bearer token required on every route but health.
    #[arg(long, env = "CLAIM_MATCH_TOKEN", hide_env_values = true)]
    pub token: Option<Secret>,
    /// Seconds between retries of messages queued during a provider outage.
    #[arg(long, default_value_t = 30)]
    pub retry_secs: u64,
    #[arg(long, default_value_t = 100)]
    pub snapshot_every: usize,
    #[arg(long, default_value_t = 5)]
    pub max_suggestions: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub matching: MatchArgs,
    #[command(flatten)]
    pub bm25: Bm25Args,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Evaluation record files.
    #[arg(required = true)]
    pub records: Vec<PathBuf>,
}
