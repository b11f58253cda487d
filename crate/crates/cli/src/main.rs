//! `skeldet` command-line tool: reproducible experiments over the toolkit.
//!
//! Exit codes: 0 success, 1 runtime error, 2 usage/config error.

mod commands;
mod config;
mod plot;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "skeldet", version, about = "Skeleton detection toolkit")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Seed for every stochastic choice in the run.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Base output directory used when --out is not given.
    #[arg(long, global = true, default_value = "out")]
    out_dir: String,

    /// key=value config file; explicit flags override file entries.
    #[arg(long, global = true)]
    config: Option<String>,

    /// Worker threads for the deterministic data-parallel paths.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset (images, labels, manifest).
    Gen(GenArgs),
    /// Encode a scale-valued skeleton label into a probability mask PNG.
    Encode(EncodeArgs),
    /// Train a network on a dataset directory.
    Train(TrainArgs),
    /// Evaluate a checkpoint (or response maps) against ground truth.
    Eval(EvalArgs),
    /// Run a checkpoint on one image and save the response.
    Infer(InferArgs),
    /// Mask-radius ablation: train + evaluate per radius, emit CSV.
    #[command(name = "ablate-r", alias = "ablate_r")]
    AblateR(AblateArgs),
    /// Render a CSV curve as an SVG plot.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Number of samples.
    #[arg(long)]
    n: usize,
    /// Image size: N or WxH.
    #[arg(long, default_value = "64")]
    size: String,
    /// Maximum shapes per image (1..=3).
    #[arg(long)]
    clutter: Option<usize>,
    /// Output dataset directory.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    /// Input label PNG (scale-valued skeleton).
    #[arg(long)]
    label: String,
    /// Mask radius (odd, 3..=31).
    #[arg(long)]
    r: Option<usize>,
    /// Output mask PNG path.
    #[arg(long)]
    out: Option<String>,
    /// Optional heatmap PNG path.
    #[arg(long)]
    heatmap: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory (synthgen layout; split.csv honored when present).
    #[arg(long)]
    data: String,
    /// Supervision regime.
    #[arg(long, value_parser = ["promask", "binary", "plain"])]
    supervision: Option<String>,
    /// Mask radius for promask/binary supervision.
    #[arg(long)]
    r: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Weight decay.
    #[arg(long)]
    wd: Option<f64>,
    /// Output directory (model.ckpt, train_log.csv).
    #[arg(long)]
    out: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    data: String,
    /// Checkpoint to evaluate.
    #[arg(long)]
    ckpt: Option<String>,
    /// Directory of res_XXXXX.png response maps (alternative to --ckpt).
    #[arg(long)]
    responses: Option<String>,
    #[arg(long)]
    out: Option<String>,
    /// Also write pr_curve.svg.
    #[arg(long)]
    svg: bool,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    ckpt: String,
    #[arg(long)]
    image: String,
    /// Output response PNG path.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    data: String,
    /// Comma-separated odd radii.
    #[arg(long, default_value = "3,5,7,9,11")]
    radii: String,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    wd: Option<f64>,
    #[arg(long)]
    out: Option<String>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[arg(long)]
    csv: String,
    /// Output SVG path.
    #[arg(long)]
    out: Option<String>,
    /// Column for the x axis.
    #[arg(long, default_value = "recall")]
    x: String,
    /// Column for the y axis.
    #[arg(long, default_value = "precision")]
    y: String,
}

pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }
}

impl From<skeldet::Error> for CliError {
    fn from(e: skeldet::Error) -> Self {
        match e {
            skeldet::Error::Config(_)
            | skeldet::Error::BadRadius(_)
            | skeldet::Error::RateTooLarge { .. } => CliError::Usage(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Gen(args) => commands::gen(&cli, args),
        Command::Encode(args) => commands::encode(&cli, args),
        Command::Train(args) => commands::train(&cli, args),
        Command::Eval(args) => commands::eval(&cli, args),
        Command::Infer(args) => commands::infer(&cli, args),
        Command::AblateR(args) => commands::ablate_r(&cli, args),
        Command::Plot(args) => commands::plot(&cli, args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(2)
        }
    }
}
