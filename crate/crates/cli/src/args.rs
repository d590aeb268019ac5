use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use embcache::cache_sim::PolicyKind;
use embcache::neural::{LossKind, ModelKind, PrefetchTarget};
use embcache::runtime::ScanOrder;

#[derive(Debug, Parser)]
#[command(name = "embcache", version, about = "Learned caching and prefetching for embedding-table traces")]
#[command(args_override_self = true)]
pub struct Cli {
    /// File of `key = value` lines presetting flags. Keys may be scoped as
    /// `command.key`; command-line flags win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic Zipf trace with Markov correlation.
    Gen(GenArgs),
    /// Reuse-distance histogram and access-frequency CDF.
    Analyze(AnalyzeArgs),
    /// Hit rate of baseline policies across buffer sizes.
    Sweep(SweepArgs),
    /// Chunk a trace and attach optgen labels.
    Label(LabelArgs),
    /// Train a caching or prefetch model on a labeled dataset.
    Train(TrainArgs),
    /// Replay a trace through the buffer and emit the access breakdown.
    Replay(ReplayArgs),
    /// Merge breakdown CSVs and attach latency estimates.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Generator settings as a `key = value` file; flags below override it.
    #[arg(long, value_name = "FILE")]
    pub gen_config: Option<PathBuf>,
    /// Comma-separated rows per table.
    #[arg(long)]
    pub tables: Option<String>,
    #[arg(long)]
    pub accesses: Option<usize>,
    #[arg(long)]
    pub zipf: Option<f64>,
    #[arg(long)]
    pub stickiness: Option<f64>,
    #[arg(long)]
    pub pool: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub trace: PathBuf,
    /// Directory for `reuse_histogram.csv` and `frequency_cdf.csv`.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "lru,lfu,srrip,optgen")]
    pub policies: Vec<PolicyKind>,
    /// Slots or percent of unique ids, e.g. `1%,5%,10%,512`.
    #[arg(long, value_delimiter = ',', default_value = "1%,5%,10%,15%,20%,30%")]
    pub capacities: Vec<String>,
    /// Set associativity; fully associative when absent.
    #[arg(long)]
    pub ways: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ChunkArgs {
    #[arg(long, default_value_t = 15)]
    pub input_len: usize,
    #[arg(long, default_value_t = 5)]
    pub output_len: usize,
    #[arg(long, default_value_t = 3)]
    pub window_ratio: usize,
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    #[arg(long)]
    pub trace: PathBuf,
    /// Runtime buffer size, in slots or percent of unique ids.
    #[arg(long, default_value = "20%")]
    pub capacity: String,
    #[command(flatten)]
    pub chunk: ChunkArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub kind: ModelKind,
    #[arg(long)]
    pub out: PathBuf,
    /// Optional per-step loss CSV.
    #[arg(long)]
    pub curve: Option<PathBuf>,
    /// Defaults to cross-entropy for caching and chamfer2 for prefetch.
    #[arg(long)]
    pub loss: Option<LossKind>,
    #[arg(long, default_value_t = 0.7)]
    pub alpha: f64,
    #[arg(long, default_value = "window")]
    pub target: PrefetchTarget,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 500)]
    pub steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub init_seed: u64,
    #[arg(long, default_value_t = 0.1)]
    pub validation_fraction: f64,
    #[arg(long, default_value_t = 32)]
    pub hidden: usize,
    #[arg(long, default_value_t = 32)]
    pub id_dim: usize,
    #[arg(long, default_value_t = 8)]
    pub table_dim: usize,
    /// LSTM layers; 1 for caching and 2 for prefetch when absent.
    #[arg(long)]
    pub stacks: Option<usize>,
    #[arg(long)]
    pub gradient_check: bool,
    /// Train in single precision.
    #[arg(long)]
    pub f32: bool,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long, default_value = "20%")]
    pub capacity: String,
    /// `model` uses the priority buffer and checkpoints; a policy name runs
    /// that policy with optional model prefetching.
    #[arg(long, default_value = "model")]
    pub policy: String,
    #[arg(long)]
    pub caching: Option<PathBuf>,
    #[arg(long)]
    pub prefetch: Option<PathBuf>,
    /// Use optgen-derived advice instead of checkpoints.
    #[arg(long)]
    pub oracle: bool,
    #[arg(long, default_value_t = 4)]
    pub eviction_speed: u32,
    #[arg(long, default_value = "label-recency")]
    pub scan_order: ScanOrder,
    #[command(flatten)]
    pub chunk: ChunkArgs,
    /// Breakdown CSV; appended rows keep one header.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub append: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Breakdown CSVs to merge.
    #[arg(long, required = true, num_args = 1.., value_delimiter = ',')]
    pub breakdown: Vec<PathBuf>,
    /// Measured `hit_rate,latency_ms` points; synthesized from the cost
    /// model when absent.
    #[arg(long)]
    pub points: Option<PathBuf>,
    #[arg(long, default_value_t = 2.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Fit summary CSV.
    #[arg(long)]
    pub fit_out: Option<PathBuf>,
}
