//! Multi-scale discriminative region discovery for weakly-supervised object
//! localization.
//!
//! Given per-layer activations and class-score gradients of a convolutional
//! classifier, the crate computes gradient weight (α) maps, weights each
//! channel by the mean of the local maxima of its α map, builds a
//! localization map per layer, fuses layers at the finest grid, extracts
//! boxes and scores them.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common choices. Tensors on disk are always `f32`.

pub mod bbox;
pub mod discovery;
pub mod error;
pub mod eval;
pub mod grad_weights;
pub mod io;
pub mod localization;
pub mod manifest;
pub mod pipeline;
pub mod scalar;
pub mod segmentation;
pub mod synth;
pub mod tensor;

pub use bbox::BoundingBox;
pub use discovery::{DiscoveryConfig, LocalMaxima, Maximum};
pub use error::{Error, Result};
pub use eval::{EvalMeta, EvalRecord, EvalSummary};
pub use localization::{FuseMode, LocalizationMap};
pub use manifest::{ManifestOptions, SampleManifest};
pub use pipeline::PipelineConfig;
pub use scalar::Scalar;
pub use segmentation::{BoxMode, Mask, SegmentationConfig};
pub use synth::SynthSpec;
pub use tensor::Tensor;

pub type TensorF32 = Tensor<f32>;
pub type TensorF64 = Tensor<f64>;
pub type LocalizationMapF32 = LocalizationMap<f32>;
pub type LocalizationMapF64 = LocalizationMap<f64>;
pub type GradientWeightMapF32 = grad_weights::GradientWeightMap<f32>;
pub type GradientWeightMapF64 = grad_weights::GradientWeightMap<f64>;
