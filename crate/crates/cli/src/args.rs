use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use msrd::segmentation::BoxMode;
use msrd::synth::GridSpec;
use msrd::{DiscoveryConfig, FuseMode, PipelineConfig, SegmentationConfig, SynthSpec};

#[derive(Debug, Parser)]
#[command(name = "msrd", version, about = "Weakly-supervised object localization from activations and gradients")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic activation/gradient fixtures and a manifest.
    Synth(SynthArgs),
    /// Write per-layer and fused localization maps.
    Locmap(LocmapArgs),
    /// Fuse per-layer maps previously written by `locmap`.
    Fuse(FuseArgs),
    /// Extract bounding boxes, one JSON record per image and class.
    Boxes(StageArgs),
    /// Score localization and write the report.
    Eval(EvalArgs),
    /// Render final maps as 8-bit grayscale PNGs at image size.
    Heatmap(StageArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub images: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 224)]
    pub width: usize,
    #[arg(long, default_value_t = 224)]
    pub height: usize,
    #[arg(long, default_value_t = 8)]
    pub channels: usize,
    #[arg(long, default_value_t = 1)]
    pub min_objects: usize,
    #[arg(long, default_value_t = 3)]
    pub max_objects: usize,
    /// Smallest object area as a fraction of the image.
    #[arg(long, default_value_t = 0.05)]
    pub min_scale: f64,
    #[arg(long, default_value_t = 0.5)]
    pub max_scale: f64,
    #[arg(long, default_value_t = 0.02)]
    pub noise: f64,
    #[arg(long, default_value_t = 20)]
    pub classes: usize,
    #[arg(long, default_value_t = 1.0)]
    pub gradient_gain: f64,
}

impl SynthArgs {
    /// Grids at 1/8 and 1/16 of the image, as for a 16-layer VGG.
    pub fn spec(&self) -> SynthSpec {
        SynthSpec {
            seed: self.seed,
            n_images: self.images,
            image_width: self.width,
            image_height: self.height,
            layers: vec![
                GridSpec::new("conv4", self.height / 8, self.width / 8, self.channels),
                GridSpec::new("conv5", self.height / 16, self.width / 16, self.channels),
            ],
            objects: (self.min_objects, self.max_objects),
            scale: (self.min_scale, self.max_scale),
            noise: self.noise,
            n_classes: self.classes,
            gradient_gain: self.gradient_gain,
        }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Layers to use; a single layer gives the one-scale baseline.
    #[arg(long, alias = "layer", value_delimiter = ',', default_values_t = ["conv4".to_string(), "conv5".to_string()])]
    pub layers: Vec<String>,
    /// Local maxima window side (odd).
    #[arg(long, default_value_t = 3)]
    pub window: usize,
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    /// Local maxima must exceed this value.
    #[arg(long, default_value_t = 0.0)]
    pub min_grad: f64,
    /// Box threshold as a fraction of the map maximum.
    #[arg(long, default_value_t = 0.2)]
    pub tau: f64,
    #[arg(long, default_value_t = BoxMode::Largest)]
    pub mode: BoxMode,
    /// Binarization threshold for the VOC explanation mask.
    #[arg(long, default_value_t = 0.25)]
    pub delta: f64,
    /// Sum layer maps without normalizing each first.
    #[arg(long)]
    pub fuse_raw: bool,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long)]
    pub workers: Option<usize>,
}

impl RunArgs {
    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            layers: self.layers.clone(),
            discovery: DiscoveryConfig {
                window: self.window,
                stride: self.stride,
                min_value: self.min_grad,
            },
            segmentation: SegmentationConfig {
                tau: self.tau,
                mode: self.mode,
            },
            fuse_mode: if self.fuse_raw { FuseMode::Raw } else { FuseMode::Normalized },
            delta: self.delta,
        }
    }
}

#[derive(Debug, Args)]
pub struct LocmapArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Directory holding the per-layer maps.
    #[arg(long)]
    pub maps: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StageArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Directory of maps written by an earlier `locmap`; without it maps
    /// are computed from the manifest.
    #[arg(long)]
    pub maps: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub maps: Option<PathBuf>,
    /// Report JSON path; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the text table here.
    #[arg(long)]
    pub table: Option<PathBuf>,
}
