use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "ir", version, about = "Synthetic degradation, restoration and evaluation of images")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a procedural corpus and its manifest.
    Synth(SynthArgs),
    /// Blur and/or add noise to an image.
    Degrade(DegradeArgs),
    /// Restore an image with a classical method or a trained network.
    Restore(RestoreArgs),
    /// White-balance an image and optionally render it to sRGB.
    Wb(WbArgs),
    /// Compare a test image against a reference.
    Metrics(MetricsArgs),
    /// Train the residual UNet.
    Train(TrainArgs),
    /// Run the degradation x method benchmark matrix.
    Bench(BenchArgs),
    /// Turn a results CSV into a markdown table.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Number of scenes.
    #[arg(long, short)]
    pub n: usize,
    /// Scene width and height in pixels (multiple of 16).
    #[arg(long, default_value_t = 128)]
    pub size: usize,
    /// Output directory for PNGs and manifest.jsonl.
    #[arg(long)]
    pub out: PathBuf,
    /// Fraction of scenes assigned to the train split.
    #[arg(long, default_value_t = ir_core::harness::DEFAULT_TRAIN_FRACTION)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct DegradeArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// AWGN standard deviation in 8-bit units.
    #[arg(long)]
    pub awgn: Option<f64>,
    /// Multiplicative speckle standard deviation.
    #[arg(long)]
    pub speckle: Option<f64>,
    /// Salt-and-pepper corruption probability.
    #[arg(long)]
    pub salt_pepper: Option<f64>,
    /// Poisson photon count at full scale.
    #[arg(long)]
    pub poisson: Option<f64>,
    /// Motion blur as LENGTH:ANGLE_DEGREES.
    #[arg(long)]
    pub motion: Option<String>,
    /// Defocus blur radius in pixels.
    #[arg(long)]
    pub disk: Option<f64>,
    /// A recipe JSON file; replaces the individual flags.
    #[arg(long, conflicts_with_all = ["awgn", "speckle", "salt_pepper", "poisson", "motion", "disk"])]
    pub recipe: Option<PathBuf>,
    /// Also write the resolved recipe as JSON.
    #[arg(long)]
    pub save_recipe: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct RestoreArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// gaussian, bilateral, nlm, anisotropic, tv, rl, wiener or neural.
    #[arg(long)]
    pub method: String,
    /// Method parameter override KEY=VALUE (repeatable), e.g. sigma=1.5 or
    /// kernel=motion:9:37.
    #[arg(long = "param", value_name = "KEY=VALUE")]
    pub params: Vec<String>,
    /// Network checkpoint for the neural method.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum WbMethod {
    Grayworld,
    Whitepatch,
}

#[derive(Debug, Args)]
pub struct WbArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = WbMethod::Grayworld)]
    pub method: WbMethod,
    /// Quantile used by white-patch estimation.
    #[arg(long, default_value_t = 0.99)]
    pub percentile: f64,
    /// 3x3 raw-to-XYZ matrix file (nine numbers, row-major).
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    /// Apply the sRGB transfer curve.
    #[arg(long)]
    pub srgb: bool,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    /// Print JSON instead of key=value pairs.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StageArg {
    Coarse,
    Fine,
    TwoStage,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Train on N synthetic scenes.
    #[arg(long, conflicts_with = "manifest")]
    pub synth: Option<usize>,
    /// Train on the train split of a manifest.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Synthetic scene size.
    #[arg(long, default_value_t = 128)]
    pub size: usize,
    /// Training patch size (multiple of 16).
    #[arg(long, default_value_t = 64)]
    pub patch: usize,
    #[arg(long, default_value_t = 4)]
    pub patches_per_image: usize,
    #[arg(long, value_enum, default_value_t = StageArg::TwoStage)]
    pub stage: StageArg,
    /// Optimizer steps of the coarse stage (or of the only stage).
    #[arg(long, default_value_t = 500)]
    pub steps: usize,
    /// Optimizer steps of the fine stage.
    #[arg(long, default_value_t = 200)]
    pub fine_steps: usize,
    #[arg(long, default_value_t = 4)]
    pub batch: usize,
    #[arg(long, default_value_t = ir_core::nn::DEFAULT_LR)]
    pub lr: f64,
    #[arg(long, default_value_t = 16)]
    pub base_width: usize,
    #[arg(long, default_value_t = 1.0)]
    pub w_ssim: f64,
    #[arg(long, default_value_t = 1.0)]
    pub w_psnr: f64,
    #[arg(long, default_value_t = 1.0)]
    pub w_l2: f64,
    #[arg(long, default_value_t = 1.0)]
    pub w_edge: f64,
    #[arg(long, default_value_t = 50.0)]
    pub psnr_cap: f64,
    /// Degradations of the coarse stage, in benchmark grid syntax.
    #[arg(long, default_value = "default")]
    pub grid: String,
    /// Blur of the fine-stage (blur-only) pairs.
    #[arg(long, default_value = "motion:9:37")]
    pub fine_blur: String,
    /// Train towards gray-world-balanced targets instead of the clean images.
    #[arg(long)]
    pub render_targets: bool,
    /// Continue from a checkpoint (weights and optimizer state).
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Output checkpoint.
    #[arg(long)]
    pub out: PathBuf,
    /// Loss-history CSV.
    #[arg(long)]
    pub history: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Benchmark N synthetic scenes.
    #[arg(long, conflicts_with = "manifest")]
    pub synth: Option<usize>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Synthetic scene size.
    #[arg(long, default_value_t = 128)]
    pub size: usize,
    /// Comma-separated methods; `identity` and `neural` are accepted too.
    #[arg(long, value_delimiter = ',', required = true)]
    pub methods: Vec<String>,
    /// Checkpoint for the `neural` method.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// `default` or cells like `awgn:25;motion:9:37+poisson:300`.
    #[arg(long, default_value = "default")]
    pub grid: String,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Results CSV written by `ir bench`.
    #[arg(long)]
    pub csv: PathBuf,
    /// Markdown output file; stdout if omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
