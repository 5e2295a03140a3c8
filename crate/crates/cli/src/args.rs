//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "temscan",
    about = "FFT feature detection, d-spacing matching, and component mapping for HRTEM images",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Analyze a single TEM image (PGM) end to end.
    Analyze(AnalyzeArgs),
    /// Batch-process an MRC stack and profile component intensities.
    Stack(StackArgs),
    /// Generate synthetic lattice fixtures with ground truth.
    Synth(SynthArgs),
    /// Compare a predicted mask against a ground-truth mask.
    Eval(EvalArgs),
    /// Emit the circular-integration profile of a TEM image.
    Radial(RadialArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScaleMode {
    /// Full frequency-pitch bookkeeping across crop/resize.
    Generalized,
    /// Published radius calibration (numerator fixed to the original size).
    Paper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum IntensityMetricArg {
    /// Sum of linear FFT magnitude within the feature mask disks.
    LinearMagnitude,
    /// Sum of 8-bit enhanced-FFT pixel values over instance pixels.
    PixelValueCount,
}

/// Pipeline knobs shared by the analysis commands.
#[derive(Debug, Args, Clone)]
pub struct PipelineArgs {
    /// TEM-image pixel size in nm/px (from the acquisition software).
    #[arg(long = "pixel-size")]
    pub pixel_size: f64,

    /// Radius-to-d conversion mode.
    #[arg(long = "scale-mode", value_enum, default_value_t = ScaleMode::Generalized)]
    pub scale_mode: ScaleMode,

    /// Center-crop applied to the FFT view (pixels).
    #[arg(long = "crop-size")]
    pub crop_size: Option<usize>,

    /// Resize applied to the cropped FFT view (pixels).
    #[arg(long = "final-size")]
    pub final_size: Option<usize>,

    /// Radial exponent of the enhancement factor map.
    #[arg(long, default_value_t = 2.0)]
    pub gamma: f64,

    /// Brightness gain compensating the factor map.
    #[arg(long, default_value_t = 1.8)]
    pub gain: f64,

    /// Detector pre-blur sigma (px).
    #[arg(long = "blur-sigma", default_value_t = 3.0)]
    pub blur_sigma: f64,

    /// Radius of the excluded central (DC) disk (px).
    #[arg(long = "dc-exclusion", default_value_t = 20.0)]
    pub dc_exclusion: f64,

    /// Detection threshold in sigmas above the residual mean.
    #[arg(long = "k-sigma", default_value_t = 4.0)]
    pub k_sigma: f64,

    /// Max centroid distance for the point-symmetric partner check (px).
    #[arg(long = "symmetry-tolerance", default_value_t = 5.0)]
    pub symmetry_tolerance: f64,

    /// Minimum blob area kept by the detector (px).
    #[arg(long = "min-blob-area", default_value_t = 4)]
    pub min_blob_area: usize,

    /// Sure-foreground cut as a fraction of the per-component max distance.
    #[arg(long = "fg-fraction", default_value_t = 0.5)]
    pub fg_fraction: f64,

    /// Morphological opening iterations before marker extraction.
    #[arg(long = "open-iters", default_value_t = 2)]
    pub open_iters: usize,

    /// Dilation iterations delineating sure background.
    #[arg(long = "dilate-iters", default_value_t = 3)]
    pub dilate_iters: usize,

    /// Mask disk radius as a multiple of the feature equivalent radius.
    #[arg(long = "radius-scale", default_value_t = 1.0)]
    pub radius_scale: f64,

    /// Component map cut as a fraction of the map maximum.
    #[arg(long = "map-threshold", default_value_t = 0.35)]
    pub map_threshold: f64,

    /// Envelope smoothing sigma for component maps (px, 0 disables).
    #[arg(long = "map-smooth-sigma", default_value_t = 3.0)]
    pub map_smooth_sigma: f64,

    /// Max relative d deviation accepted when matching the database.
    #[arg(long = "match-tolerance", default_value_t = 0.02)]
    pub match_tolerance: f64,

    /// Intensity metric for component profiles.
    #[arg(long = "intensity-metric", value_enum, default_value_t = IntensityMetricArg::LinearMagnitude)]
    pub intensity_metric: IntensityMetricArg,
}

#[derive(Debug, Parser)]
pub struct AnalyzeArgs {
    /// Input TEM image (binary P5 PGM).
    pub image: PathBuf,

    /// d-spacing database CSV (name,hkl,d_angstrom).
    #[arg(long)]
    pub db: PathBuf,

    /// Output directory for reports and artifacts.
    #[arg(long)]
    pub out: PathBuf,

    /// External feature mask (P5; foreground >= 128) instead of the
    /// built-in detector.
    #[arg(long)]
    pub mask: Option<PathBuf>,

    /// Treat --mask as the top half of the FFT view and complete it by
    /// point symmetry.
    #[arg(long, requires = "mask")]
    pub half: bool,

    /// Treat --mask as a probability map and threshold it at this value.
    #[arg(long = "mask-threshold", requires = "mask")]
    pub mask_threshold: Option<f64>,

    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Parser)]
pub struct StackArgs {
    /// Input MRC stack.
    pub mrc: PathBuf,

    /// d-spacing database CSV (name,hkl,d_angstrom).
    #[arg(long)]
    pub db: PathBuf,

    /// Output directory for reports and artifacts.
    #[arg(long)]
    pub out: PathBuf,

    /// Worker threads for per-frame parallelism (output is identical for
    /// any worker count).
    #[arg(long, default_value_t = default_workers())]
    pub workers: usize,

    /// Seconds of beam exposure per frame.
    #[arg(long = "frame-time", default_value_t = 2.46)]
    pub frame_time: f64,

    /// Skip writing per-frame overlay images.
    #[arg(long = "no-frame-overlays")]
    pub no_frame_overlays: bool,

    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

fn default_workers() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

#[derive(Debug, Parser)]
pub struct SynthArgs {
    /// Output directory for the fixture.
    #[arg(long)]
    pub out: PathBuf,

    /// Fringe spec `d_angstrom:orientation_deg:amplitude[:phase_deg]`;
    /// repeat for multiple fringes.
    #[arg(long = "fringes", required = true)]
    pub fringes: Vec<String>,

    /// Image size in pixels (square).
    #[arg(long, default_value_t = 1024)]
    pub size: usize,

    /// Pixel size in nm/px.
    #[arg(long = "pixel-size")]
    pub pixel_size: f64,

    /// Gaussian noise sigma added to the lattice image.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,

    /// RNG seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Ground-truth mask disk radius around each expected spot (px).
    #[arg(long = "spot-mask-radius", default_value_t = 6.0)]
    pub spot_mask_radius: f64,

    /// Also export an augmented training set with this many pairs.
    #[arg(long = "train-count")]
    pub train_count: Option<usize>,

    /// Square size training pairs are resized to before half-cropping.
    #[arg(long = "train-size", default_value_t = 1024)]
    pub train_size: usize,
}

#[derive(Debug, Parser)]
pub struct EvalArgs {
    /// Predicted mask (P5; foreground >= 128).
    #[arg(long)]
    pub pred: PathBuf,

    /// Ground-truth mask (P5; foreground >= 128).
    #[arg(long)]
    pub truth: PathBuf,

    /// Optional directory for eval.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Parser)]
pub struct RadialArgs {
    /// Input TEM image (binary P5 PGM).
    pub image: PathBuf,

    /// Output directory for radial_profile.csv.
    #[arg(long)]
    pub out: PathBuf,

    /// Restrict the integration to this mask (P5, FFT-view sized).
    #[arg(long)]
    pub mask: Option<PathBuf>,

    #[command(flatten)]
    pub pipeline: PipelineArgs,
}
