use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "handoff", version, about = "Detector-to-parser handoff toolkit")]
pub struct Cli {
    /// Handoff configuration (TOML, or JSON by extension).
    #[arg(long, global = true, env = "HANDOFF_CONFIG")]
    pub config: Option<PathBuf>,
    /// Worker threads for per-page work.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Only print errors.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus of pools, ground truth and oracle files.
    Synth(SynthArgs),
    /// Build the parser interface for one pool.
    Handoff(HandoffArgs),
    /// Score predicted interfaces against ground truth.
    Eval(EvalArgs),
    /// Evaluate the training objective on a pool/ground-truth pair.
    Loss(LossArgs),
    /// Compare strategies over a corpus directory.
    Compare(CompareArgs),
    /// Draw a pool or interface as SVG.
    Render(RenderArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub scenario: String,
    #[arg(long, default_value_t = 10)]
    pub pages: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Override the scenario's elements per page.
    #[arg(long)]
    pub elements: Option<usize>,
}

#[derive(Debug, Args)]
pub struct HandoffArgs {
    #[arg(long)]
    pub pool: PathBuf,
    /// Ground truth; page metrics are printed to stderr.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Overrides the configured strategy.
    #[arg(long)]
    pub strategy: Option<String>,
    /// Interface output; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub decisions: Option<PathBuf>,
    /// External order for the decoupled strategy: an oracle file or an `{"id": score}` map.
    #[arg(long)]
    pub order: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, default_value_t = layout_handoff::metrics::DEFAULT_IOU_THRESHOLD)]
    pub iou: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LossArgs {
    #[arg(long)]
    pub pool: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    /// Verify analytic gradients against central differences.
    #[arg(long)]
    pub check_gradients: bool,
    #[arg(long, default_value_t = layout_handoff::gradcheck::FD_STEP)]
    pub step: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Directory of `<stem>.pool.json` / `<stem>.gt.json` pairs.
    #[arg(long)]
    pub dir: PathBuf,
    /// Comma-separated strategy names, or `all`.
    #[arg(long, default_value = "all")]
    pub strategies: String,
    #[arg(long, default_value_t = layout_handoff::metrics::DEFAULT_IOU_THRESHOLD)]
    pub iou: f64,
    /// JSON report output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Text table output; stdout when absent.
    #[arg(long)]
    pub table: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long, conflicts_with = "iface", required_unless_present = "iface")]
    pub pool: Option<PathBuf>,
    #[arg(long)]
    pub iface: Option<PathBuf>,
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Strategy used when rendering a pool.
    #[arg(long)]
    pub strategy: Option<String>,
    #[arg(long)]
    pub order: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
