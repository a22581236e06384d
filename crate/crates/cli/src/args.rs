use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use kpcacam::localization::{DEFAULT_IOU_THRESHOLD, DEFAULT_THRESHOLD_FRAC};
use kpcacam::road::{DEFAULT_MORF_FRACTION, DEFAULT_NOISE_STD_FRAC};

#[derive(Debug, Parser)]
#[command(name = "kpcacam", version, about = "Kernel PCA class activation maps and their evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a normalized heatmap (.cam.npy) and an overlay (.cam.png) per image.
    Cam(RunArgs),
    /// Weakly-supervised localization: loc1 / loc5 against ground-truth boxes.
    Localize(RunArgs),
    /// ROAD most-relevant-first confidence drop.
    Road(RunArgs),
    /// Merge report.json files into one comparison table.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Eigen,
    Kpca,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelArg {
    Rbf,
    Sigmoid,
    Linear,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// `fixtures:<dir>` or `onnx:<model.onnx>`.
    #[arg(long)]
    pub backend: String,
    /// Fixture-layout directory with the images for an onnx backend
    /// (default: the model's directory).
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub method: MethodArg,
    /// Required for --method kpca.
    #[arg(long, value_enum)]
    pub kernel: Option<KernelArg>,
    /// Kernel γ (default: 0.1 for sigmoid, 0.001 for rbf).
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Sigmoid offset r.
    #[arg(long, allow_hyphen_values = true)]
    pub coef_r: Option<f64>,
    /// Skip kernel double-centering.
    #[arg(long)]
    pub no_center: bool,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD_FRAC)]
    pub threshold_frac: f64,
    #[arg(long, default_value_t = DEFAULT_IOU_THRESHOLD)]
    pub iou_threshold: f64,
    #[arg(long, default_value_t = DEFAULT_MORF_FRACTION)]
    pub morf_fraction: f64,
    #[arg(long, default_value_t = DEFAULT_NOISE_STD_FRAC)]
    pub noise_std_frac: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads (0: one per core).
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// report.json files written by cam / localize / road.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}
