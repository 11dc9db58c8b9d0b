mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};
use irsr_core::harness::{with_workers, workers_from_env};
use irsr_core::Error;

use crate::config::Config;

/// Evaluation harness for x4 infrared image super-resolution.
#[derive(Debug, Parser)]
#[command(
    name = "irsr",
    version,
    subcommand_required = true,
    arg_required_else_help = true
)]
pub struct Cli {
    /// TOML file with default flags and `[models.<name>]` engine definitions.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Bicubic x4 downscale of one PNG or a directory of PNGs.
    Degrade(DegradeArgs),
    /// Super-resolve a directory of LR PNGs with one model.
    Infer(InferArgs),
    /// Like `infer`, averaging over the 8 flips and rotations.
    TtaInfer(InferArgs),
    /// Weighted per-pixel fusion of several SR directories.
    Fuse(FuseArgs),
    /// Grid-search fusion weights against ground truth.
    TuneWeights(TuneArgs),
    /// Score an SR directory against a dataset.
    Score(ScoreArgs),
    /// Rank teams by PSNR + 20 * SSIM.
    Rank(RankArgs),
    /// Write a seeded synthetic HR/LR dataset.
    GenSynth(SynthArgs),
    /// Degrade, super-resolve, fuse and score in one go.
    RunPipeline(PipelineArgs),
}

#[derive(Debug, Clone, Args)]
pub struct MetricArgs {
    /// SSIM border handling: valid or symmetric.
    #[arg(long, default_value = "valid")]
    ssim_pad: String,
    /// Pixels dropped from each border before scoring.
    #[arg(long, default_value_t = 0)]
    shave: usize,
    /// Round luminance to integers before scoring.
    #[arg(long)]
    round: bool,
    /// PSNR reported for identical images, in dB.
    #[arg(long, default_value_t = irsr_core::metrics::PSNR_CAP_DB)]
    psnr_cap: f64,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Builtin filter (nearest, bilinear, bicubic, lanczos3) or a model from the config file.
    #[arg(long = "model", value_name = "NAME")]
    models: Vec<String>,
    /// Ad-hoc external engine, e.g. `my-sr {input_dir} {output_dir}`.
    #[arg(long, value_name = "TEMPLATE")]
    model_cmd: Option<String>,
    /// Pad inputs of `--model-cmd` to a multiple of this size.
    #[arg(long, default_value_t = 1)]
    window: usize,
    /// Timeout for `--model-cmd`, in seconds.
    #[arg(long, value_name = "SECS")]
    timeout: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct DegradeArgs {
    #[arg(long, value_name = "PATH")]
    hr: PathBuf,
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    #[arg(long, default_value = "bicubic")]
    filter: String,
    /// Bicubic kernel coefficient.
    #[arg(long, default_value_t = irsr_core::resample::DEFAULT_BICUBIC_A, allow_hyphen_values = true)]
    bicubic_a: f64,
    /// Disable the widened kernel when shrinking.
    #[arg(long)]
    no_antialias: bool,
}

#[derive(Debug, Clone, Args)]
pub struct InferArgs {
    #[arg(long, value_name = "DIR")]
    lr: PathBuf,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Debug, Clone, Args)]
pub struct FuseArgs {
    /// SR directory; repeat once per model.
    #[arg(long = "input", value_name = "DIR", required = true)]
    inputs: Vec<PathBuf>,
    /// Comma-separated weights, one per input; equal weights if omitted.
    #[arg(long, value_delimiter = ',', value_name = "W,..")]
    weights: Vec<f64>,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct TuneArgs {
    /// SR outputs of the first model (weight alpha).
    #[arg(long, value_name = "DIR", requires = "b", conflicts_with = "inputs")]
    a: Option<PathBuf>,
    /// SR outputs of the second model (weight 1 - alpha).
    #[arg(long, value_name = "DIR", requires = "a")]
    b: Option<PathBuf>,
    /// SR outputs of each model for a search over the weight simplex.
    #[arg(long = "inputs", value_name = "DIR", num_args = 1..)]
    inputs: Vec<PathBuf>,
    /// Ground-truth HR directory or a dataset root containing `HR/`.
    #[arg(long, value_name = "DIR")]
    gt: PathBuf,
    #[arg(long, default_value_t = irsr_core::ensemble::DEFAULT_ALPHA_LO)]
    lo: f64,
    #[arg(long, default_value_t = irsr_core::ensemble::DEFAULT_ALPHA_HI)]
    hi: f64,
    /// Grid step (default 0.01 for alpha, 0.1 for the simplex).
    #[arg(long)]
    step: Option<f64>,
    /// Explicit comma-separated alpha values instead of a grid.
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["lo", "hi", "step"])]
    candidates: Vec<f64>,
    /// Refuse simplex grids with more points than this.
    #[arg(long, default_value_t = irsr_core::ensemble::DEFAULT_GRID_CAP)]
    cap: usize,
    /// Sensitivity CSV destination (stdout if omitted).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    #[command(flatten)]
    metrics: MetricArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ScoreArgs {
    #[arg(long, value_name = "DIR")]
    sr: PathBuf,
    /// Dataset root with `LR/` and `HR/`.
    #[arg(long, value_name = "DIR", required_unless_present = "manifest")]
    data: Option<PathBuf>,
    /// CSV manifest (`image_id,lr_path,hr_path`) instead of `--data`.
    #[arg(long, value_name = "FILE", conflicts_with = "data")]
    manifest: Option<PathBuf>,
    #[arg(long, default_value = "validation")]
    phase: String,
    /// csv, json or text.
    #[arg(long, default_value = "text")]
    format: String,
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    #[command(flatten)]
    metrics: MetricArgs,
}

#[derive(Debug, Clone, Args)]
pub struct RankArgs {
    /// CSV with team, PSNR and SSIM columns.
    #[arg(long, value_name = "FILE")]
    results: PathBuf,
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `default` or `WxH:N,WxH:N,...`.
    #[arg(long, default_value = "default")]
    plan: String,
}

#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    /// HR directory or a dataset root containing `HR/`.
    #[arg(long, value_name = "DIR")]
    data: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    /// Self-ensemble over the 8 flips and rotations.
    #[arg(long)]
    tta: bool,
    #[arg(long, value_delimiter = ',', value_name = "W,..")]
    weights: Vec<f64>,
    /// Also write the generated `LR/` and fused `SR/` images here.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, default_value = "text")]
    format: String,
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
    #[command(flatten)]
    metrics: MetricArgs,
}

enum Failure {
    Clap(clap::Error),
    Harness(Error),
}

fn parse(argv: Vec<OsString>) -> Result<(Cli, Config), Failure> {
    let cmd = Cli::command();
    let matches = cmd
        .clone()
        .try_get_matches_from(&argv)
        .map_err(Failure::Clap)?;
    let Some(path) = matches.get_one::<PathBuf>("config") else {
        let cli = Cli::try_parse_from(&argv).map_err(Failure::Clap)?;
        return Ok((cli, Config::default()));
    };
    let cfg = Config::load(path).map_err(Failure::Harness)?;
    let (sub, sub_matches) = matches.subcommand().expect("subcommand is required");
    let extra = cfg
        .args_for(&cmd, sub, sub_matches)
        .map_err(Failure::Harness)?;
    let merged: Vec<OsString> = argv
        .into_iter()
        .chain(extra.into_iter().map(OsString::from))
        .collect();
    let cli = Cli::try_parse_from(merged).map_err(Failure::Clap)?;
    Ok((cli, cfg))
}

fn main() -> ExitCode {
    let (cli, cfg) = match parse(std::env::args_os().collect()) {
        Ok(v) => v,
        Err(Failure::Clap(e)) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
        Err(Failure::Harness(e)) => return report(e),
    };
    match with_workers(workers_from_env(), || commands::run(cli.command, &cfg)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(e),
    }
}

fn report(e: Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(if e.is_runtime_failure() { 2 } else { 1 })
}
