//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use toss::fusion::FusionMethod;
use toss::textprep::PrepConfig;

#[derive(Debug, Parser)]
#[command(name = "toss", version, about = "Two-stage hybrid code search and evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build and persist the lexical index and, optionally, corpus embeddings.
    Index(IndexArgs),
    /// Run one query through the pipeline and print the top results.
    Search(SearchArgs),
    /// Evaluate a query set: MRR, R@K and optional latency.
    Eval(EvalArgs),
    /// Recall-overlap counts between channels.
    Overlap(OverlapArgs),
    /// Fuse TREC run files and evaluate the fused ranking.
    Fuse(FuseArgs),
    /// Serve the adapter protocol with the built-in stub models.
    #[command(hide = true)]
    AdapterStub(StubArgs),
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    /// Line-delimited JSON corpus.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Language recorded for documents that do not name one.
    #[arg(long, default_value = "python")]
    pub language: String,
    /// Preprocessing steps: `none`, `all`, or a comma list of sps,ds,rs,pos.
    #[arg(long, default_value = "all")]
    pub prep: PrepConfig,
    /// Embedding provider for the dense channel: stub[:dim], file:<path>, adapter[:<command>].
    #[arg(long)]
    pub embed: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

/// Everything needed to recall candidates from a saved index.
#[derive(Debug, Args)]
pub struct RecallArgs {
    /// Index directory written by `toss index`.
    #[arg(long)]
    pub index: PathBuf,
    /// First-stage channel as name:kind:K, kind:K or kind; repeatable.
    #[arg(long = "channel", required = true)]
    pub channels: Vec<String>,
    /// Recall depth for channels given without one.
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    pub k: u64,
    /// Embedding provider for dense queries; stub indexes restore theirs.
    #[arg(long)]
    pub embed: Option<String>,
    /// Expected preprocessing; refused if the index was built differently.
    #[arg(long)]
    pub prep: Option<PrepConfig>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[command(flatten)]
    pub recall: RecallArgs,
    /// Second-stage scorer: stub, oracle, none, adapter[:<command>].
    #[arg(long, default_value = "stub")]
    pub scorer: String,
    /// Fuse channel (and reranker) scores instead of reranking alone.
    #[arg(long)]
    pub fuse: Option<FusionMethod>,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Query text.
    #[arg(long)]
    pub query: String,
    /// Ground-truth document id, required by the oracle scorer.
    #[arg(long)]
    pub gt: Option<String>,
    /// Number of results to print.
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    pub top: u64,
    /// Print JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Line-delimited JSON queries with ground truth.
    #[arg(long)]
    pub queries: PathBuf,
    /// Also time a seeded sample of queries.
    #[arg(long)]
    pub latency: bool,
    #[arg(long, default_value_t = 100)]
    pub sample_size: usize,
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    /// Seed for every random choice (the latency sample).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; forced to 1 with --latency.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub jobs: u64,
    /// Write the JSON report here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write every ranking as a TREC run file.
    #[arg(long)]
    pub run_dump: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OverlapArgs {
    #[command(flatten)]
    pub recall: RecallArgs,
    #[arg(long)]
    pub queries: PathBuf,
    /// Depth compared across channels.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub top: u64,
    /// Print JSON to standard output; the table goes to standard error.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    /// Index directory; supplies the corpus ids the runs refer to.
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub queries: PathBuf,
    /// TREC run file; repeatable. Each channel name becomes one model.
    #[arg(long = "run", required = true)]
    pub runs: Vec<PathBuf>,
    #[arg(long, default_value = "combsum")]
    pub method: FusionMethod,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub run_dump: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum StubMode {
    Embedder,
    PairScorer,
}

#[derive(Debug, Args)]
pub struct StubArgs {
    #[arg(long, value_enum)]
    pub mode: StubMode,
    /// Embedder dimension.
    #[arg(long, default_value_t = 256)]
    pub dim: usize,
    /// Embedder preprocessing.
    #[arg(long, default_value = "all")]
    pub prep: PrepConfig,
    /// Index whose statistics the pair scorer uses.
    #[arg(long, required_if_eq("mode", "pair_scorer"))]
    pub index: Option<PathBuf>,
}
