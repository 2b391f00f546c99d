use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod meta;

#[derive(Parser)]
#[command(
    name = "depthprior",
    version,
    about = "Depth priors for 2D object detection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-object depth-based loss weights for ground-truth boxes.
    Dlw(DlwArgs),
    /// Per-level depth stratification masks.
    Dls(DlsArgs),
    /// Fit a depth-aware threshold lookup table.
    DctFit(DctFitArgs),
    /// Filter detections with a lookup table (or a constant threshold).
    DctApply(DctApplyArgs),
    /// COCO metrics and TD/ED/MD counts.
    Eval(EvalArgs),
    /// Match-rate grid, threshold sweep and cost-optimal thresholds.
    Analyze(AnalyzeArgs),
    /// Heteroscedastic-noise simulations.
    Simulate(SimulateArgs),
    /// Write a synthetic corpus (depth maps, detections, ground truth).
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
enum WeightMode {
    Dlw,
    RawD,
    InvOnly,
    ExpNoinv,
    Linear,
    Quadratic,
    Bw,
    Iw,
}

#[derive(Args)]
struct DlwArgs {
    /// Directory of `<image>.dpm` depth maps.
    #[arg(long)]
    depth_dir: PathBuf,
    #[arg(long)]
    groundtruth: PathBuf,
    /// Far-object emphasis.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, value_enum, default_value_t = WeightMode::Dlw)]
    mode: WeightMode,
    /// JSON array of image-id arrays, one per batch. Without it all images
    /// form one batch.
    #[arg(long)]
    batch_manifest: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
enum StratModeArg {
    Quantile,
    Absolute,
}

#[derive(Args)]
struct DlsArgs {
    #[arg(long)]
    depth_dir: PathBuf,
    /// Close/distant boundary (quantile level or depth value).
    #[arg(long, default_value_t = 0.5)]
    beta: f64,
    /// Comma-separated boundaries for K > 2 strata; overrides --beta.
    #[arg(long, value_delimiter = ',')]
    cuts: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value_t = StratModeArg::Quantile)]
    strat_mode: StratModeArg,
    /// Per-stratum loss weights, closest first.
    #[arg(long, value_delimiter = ',', default_value = "1,2")]
    lambdas: Vec<f64>,
    /// Feature-level sizes as HxW, comma-separated. Defaults to the map size.
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<String>>,
    /// Output directory for `<image>.L<level>.K<stratum>.dpm` masks.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
enum ObjectiveArg {
    Base,
    AbsRatio,
    RelRatio,
}

#[derive(Clone, Copy, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
enum BoundsArg {
    Safe,
    Literal,
}

#[derive(Args, Clone, serde::Serialize)]
struct MatchArgs {
    /// IoU needed for a detection to match a ground-truth box.
    #[arg(long = "iou", default_value_t = 0.5)]
    iou_threshold: f64,
    /// Match across classes.
    #[arg(long)]
    class_agnostic: bool,
}

#[derive(Args)]
struct DctFitArgs {
    #[arg(long)]
    depth_dir: PathBuf,
    #[arg(long)]
    detections: PathBuf,
    #[arg(long)]
    groundtruth: PathBuf,
    /// Reference thresholds, comma-separated.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9"
    )]
    taus: Vec<f64>,
    /// Number of spline coefficients.
    #[arg(long, default_value_t = 10)]
    knots: usize,
    /// Upper end of the spline depth domain (the lower end is 0).
    #[arg(long, default_value_t = 0.9)]
    domain_max: f64,
    /// Allowed relative growth of extra detections.
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    /// Penalty per extra detection above the allowance.
    #[arg(long, default_value_t = 1000.0)]
    gamma: f64,
    /// Minimum admissible threshold.
    #[arg(long, default_value_t = 0.1)]
    rho: f64,
    #[arg(long, value_enum, default_value_t = ObjectiveArg::Base)]
    objective: ObjectiveArg,
    #[arg(long, value_enum, default_value_t = BoundsArg::Safe)]
    bounds: BoundsArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 32)]
    population: usize,
    #[arg(long, default_value_t = 200)]
    generations: usize,
    #[command(flatten)]
    matching: MatchArgs,
    /// Lookup-table JSON to write.
    #[arg(long)]
    out: PathBuf,
    /// Optional JSONL log of the best objective per generation.
    #[arg(long)]
    fit_log: Option<PathBuf>,
}

#[derive(Args)]
struct DctApplyArgs {
    #[arg(long)]
    depth_dir: Option<PathBuf>,
    #[arg(long)]
    detections: PathBuf,
    /// Lookup table; without it detections are filtered at --tau0 directly.
    #[arg(long)]
    lut: Option<PathBuf>,
    #[arg(long)]
    tau0: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    detections: PathBuf,
    #[arg(long)]
    groundtruth: PathBuf,
    /// Depth maps; enables the depth-binned TD/ED/MD report.
    #[arg(long)]
    depth_dir: Option<PathBuf>,
    /// Threshold for the TD/ED/MD report.
    #[arg(long, default_value_t = 0.0)]
    tau0: f64,
    /// Use the lookup-table curve for --tau0 in the TD/ED/MD report.
    #[arg(long)]
    lut: Option<PathBuf>,
    #[command(flatten)]
    matching: MatchArgs,
    /// Report JSON to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    depth_dir: PathBuf,
    #[arg(long)]
    detections: PathBuf,
    #[arg(long)]
    groundtruth: PathBuf,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9"
    )]
    taus: Vec<f64>,
    #[arg(long)]
    lut: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    score_bins: usize,
    #[arg(long, default_value_t = 10)]
    depth_bins: usize,
    /// Cost of rejecting a true detection.
    #[arg(long, default_value_t = 1.0)]
    c_fn: f64,
    /// Cost of keeping a false detection.
    #[arg(long, default_value_t = 1.0)]
    c_fp: f64,
    #[command(flatten)]
    matching: MatchArgs,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
enum SimWeightArg {
    Uniform,
    Compensating,
    DlwExponential,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 1.0)]
    kappa: f64,
    #[arg(long, default_value_t = 1.0)]
    alpha_signal: f64,
    #[arg(long, default_value_t = 0.1)]
    sigma_eps: f64,
    /// Samples for the variance-law fit.
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, default_value_t = 0.05)]
    depth_min: f64,
    #[arg(long, default_value_t = 1.0)]
    depth_max: f64,
    #[arg(long, default_value_t = 20)]
    variance_bins: usize,
    /// Weightings for the training-bias experiment, comma-separated.
    #[arg(
        long,
        value_enum,
        value_delimiter = ',',
        default_value = "uniform,compensating,dlw-exponential"
    )]
    weighting: Vec<SimWeightArg>,
    /// Independent replicas, seeded seed..seed+replicas.
    #[arg(long, default_value_t = 20)]
    replicas: u64,
    /// Training samples per replica.
    #[arg(long, default_value_t = 2000)]
    train_samples: usize,
    #[arg(long, default_value_t = 3)]
    epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    /// Huber threshold of the learner's loss; 0 selects the squared loss.
    #[arg(long, default_value_t = 0.3)]
    huber_delta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
enum SynthKind {
    Realistic,
    Planted,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum, default_value_t = SynthKind::Realistic)]
    kind: SynthKind,
    /// Image count (realistic corpus).
    #[arg(long, default_value_t = 50)]
    images: usize,
    /// Reference threshold the planted corpus is built around.
    #[arg(long, default_value_t = 0.5)]
    tau0: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

/// 2 for unreadable or malformed input, 1 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    let format = err
        .chain()
        .find_map(|c| c.downcast_ref::<depthprior::Error>())
        .is_some_and(depthprior::Error::is_format);
    if format {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Dlw(a) => commands::dlw(a),
        Command::Dls(a) => commands::dls(a),
        Command::DctFit(a) => commands::dct_fit(a),
        Command::DctApply(a) => commands::dct_apply(a),
        Command::Eval(a) => commands::eval(a),
        Command::Analyze(a) => commands::analyze(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Synth(a) => commands::synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
