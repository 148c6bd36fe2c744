mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use chartmoe_core::Error;
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "chartmoe",
    version,
    about = "Desk-scale MoE connector pipeline for chart understanding"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON config file; flags given on the command line override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Global seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory [default: $CHARTMOE_OUT, else ./chartmoe-out].
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for synth and ablate.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Add the balance + router z-loss during SFT.
    #[arg(long, global = true)]
    pub bz_loss: bool,
    /// Use raw top-K softmax weights instead of renormalizing them.
    #[arg(long, global = true)]
    pub faithful_topk: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize chart/table/JSON/code quadruples into a manifest.
    Synth(SynthArgs),
    /// Align single connectors on general images and on chart serializations.
    Align(AlignArgs),
    /// Build an MoE connector from aligned experts.
    Init(InitArgs),
    /// Two-phase supervised fine-tuning on the toy chart QA task.
    Sft(SftArgs),
    /// Compare initialization strategies and bz-loss over several seeds.
    Ablate(AblateArgs),
    /// Score predictions with relaxed accuracy.
    Eval(EvalArgs),
    /// Export a top-1 routing map of a chart as SVG.
    RouteViz(RouteVizArgs),
    /// Finite-difference check of connector, gate and LoRA gradients.
    GradCheck(GradCheckArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Number of seeds to try, starting at --seed.
    #[arg(long)]
    pub n: usize,
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    /// Comma-separated subset of general,table,json,code.
    #[arg(long, value_delimiter = ',', default_value = "general,table,json,code")]
    pub kinds: Vec<String>,
    /// Charts per chart alignment task.
    #[arg(long)]
    pub charts: Option<usize>,
    /// Images in the general alignment task.
    #[arg(long)]
    pub general: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
}

#[derive(Debug, Args)]
pub struct InitArgs {
    /// random, co_upcycle or diverse.
    #[arg(long, default_value = "diverse")]
    pub strategy: String,
    /// Directory holding aligned experts [default: <out>/experts].
    #[arg(long)]
    pub experts_dir: Option<PathBuf>,
    #[arg(long)]
    pub num_experts: Option<usize>,
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Connector checkpoint to write [default: <out>/connector_init.json].
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SftArgs {
    /// Connector checkpoint to fine-tune [default: <out>/connector_init.json].
    #[arg(long)]
    pub connector: Option<PathBuf>,
    /// Scale every phase's epoch count (for quick runs).
    #[arg(long)]
    pub epochs_scale: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Seeds 0..n.
    #[arg(long, default_value_t = 5)]
    pub seeds: u64,
    /// Comma-separated variants; a `+bz` suffix turns the bz-loss on.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "random,co_upcycle,diverse,diverse+bz"
    )]
    pub variants: Vec<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// JSON lines of {id, question, ground_truth, prediction}.
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.10,0.20")]
    pub margins: Vec<f64>,
    /// Treat predictions as programs and score their answers.
    #[arg(long)]
    pub pot: bool,
    /// Report path [default: <out>/eval_report.json].
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RouteVizArgs {
    /// Connector checkpoint; without one, a zero-gate connector is used.
    #[arg(long)]
    pub connector: Option<PathBuf>,
    /// Synthesize the chart from this seed.
    #[arg(long, conflicts_with = "image")]
    pub chart_seed: Option<u64>,
    /// Use a PNG instead of a synthesized chart.
    #[arg(long)]
    pub image: Option<PathBuf>,
    /// SVG path [default: <out>/route_map.svg].
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradCheckArgs {
    #[arg(long, default_value_t = 20)]
    pub configs: usize,
}

/// 1 for configuration and input problems, 2 for I/O, 3 for numeric failure.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } => 2,
        Error::Numeric(_) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("chartmoe: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
