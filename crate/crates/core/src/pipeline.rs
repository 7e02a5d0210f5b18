//! End-to-end localization for one sample: α maps → local maxima weights →
//! per-layer maps → fusion → boxes and metrics.
//!
//! The final (fused or single-layer) map is rounded to `f32` before boxes are
//! extracted, which is exactly what a staged run that writes the map to disk
//! and reads it back sees. Both routes therefore produce identical boxes.

use std::collections::BTreeMap;

use log::warn;

use crate::bbox::BoundingBox;
use crate::discovery::{channel_weights, DiscoveryConfig};
use crate::error::{Error, Result};
use crate::eval::{score_predictions, voc_loc, EvalMeta, EvalRecord, VocScore};
use crate::grad_weights::{alpha_maps, GradientWeightMap};
use crate::io::read_tensor;
use crate::localization::{
    binarize_for_explanation, finest_grid, fuse, layer_locmap, normalize01, upsample_bilinear, upsample_nearest,
    FuseMode, LocalizationMap,
};
use crate::manifest::{LayerFiles, SampleManifest};
use crate::scalar::Scalar;
use crate::segmentation::{boxes_from_map, Mask, SegmentationConfig};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub layers: Vec<String>,
    pub discovery: DiscoveryConfig,
    pub segmentation: SegmentationConfig,
    pub fuse_mode: FuseMode,
    /// Binarization threshold for the VOC explanation mask.
    pub delta: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            layers: vec!["conv4".into(), "conv5".into()],
            discovery: DiscoveryConfig::default(),
            segmentation: SegmentationConfig::default(),
            fuse_mode: FuseMode::Normalized,
            delta: 0.25,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Config("at least one layer is required".into()));
        }
        self.discovery.validate()?;
        self.segmentation.validate()?;
        if !(0.0..1.0).contains(&self.delta) {
            return Err(Error::Config(format!("delta must lie in [0,1), got {}", self.delta)));
        }
        Ok(())
    }

    pub fn meta(&self) -> EvalMeta {
        EvalMeta {
            layers: self.layers.clone(),
            window: self.discovery.window,
            stride: self.discovery.stride,
            min_value: self.discovery.min_value,
            tau: self.segmentation.tau,
            mode: self.segmentation.mode.to_string(),
            delta: self.delta,
            fuse_raw: self.fuse_mode == FuseMode::Raw,
        }
    }

    /// File tag of the final map: the layer name, or `fused`.
    pub fn final_tag(&self) -> &str {
        if self.layers.len() == 1 {
            &self.layers[0]
        } else {
            "fused"
        }
    }
}

/// Activations and gradients of one layer.
#[derive(Clone, Debug)]
pub struct LayerInput<T> {
    pub name: String,
    pub activations: Tensor<T>,
    pub gradients: Tensor<T>,
}

impl<T: Scalar> LayerInput<T> {
    pub fn load(name: &str, files: &LayerFiles) -> Result<Self> {
        let activations = read_tensor(&files.activations)?.cast::<T>()?;
        let gradients = read_tensor(&files.gradients)?.cast::<T>()?;
        if activations.shape() != gradients.shape() {
            return Err(Error::ShapeMismatch {
                left: activations.shape().to_vec(),
                right: gradients.shape().to_vec(),
            });
        }
        activations.require_rank(3)?;
        Ok(LayerInput {
            name: name.to_string(),
            activations,
            gradients,
        })
    }
}

pub fn load_layers<T: Scalar>(files: &BTreeMap<String, LayerFiles>, layers: &[String]) -> Result<Vec<LayerInput<T>>> {
    layers
        .iter()
        .map(|name| {
            let f = files
                .get(name)
                .ok_or_else(|| Error::Validation(format!("layer `{name}` not in manifest")))?;
            LayerInput::load(name, f)
        })
        .collect()
}

/// Single-layer map from precomputed gradient weight maps.
pub fn layer_map_from_weights<T: Scalar>(
    activations: &Tensor<T>,
    gwm: &GradientWeightMap<T>,
    cfg: &DiscoveryConfig,
    tag: &str,
) -> Result<LocalizationMap<T>> {
    let weights = channel_weights(gwm, cfg)?;
    layer_locmap(activations, &weights, tag)
}

pub fn layer_map<T: Scalar>(input: &LayerInput<T>, cfg: &DiscoveryConfig) -> Result<LocalizationMap<T>> {
    let gwm = alpha_maps(&input.activations, &input.gradients)?;
    if gwm.clamped > 0 {
        warn!("layer {}: {} α entries clamped to zero", input.name, gwm.clamped);
    }
    layer_map_from_weights(&input.activations, &gwm, cfg, &input.name)
}

/// Rounds a map to the precision it has on disk.
pub fn quantize<T: Scalar>(map: &LocalizationMap<T>) -> LocalizationMap<T> {
    LocalizationMap {
        map: Tensor::from_parts(
            map.map.shape().to_vec(),
            map.map.data().iter().map(|v| T::from_f32_exact(v.to_f32_lossy())).collect(),
        ),
        scale_tag: map.scale_tag.clone(),
        normalized: map.normalized,
    }
}

/// Per-layer maps and the final map for one class.
#[derive(Clone, Debug)]
pub struct ClassMaps<T> {
    pub per_layer: Vec<LocalizationMap<T>>,
    /// Fused map when several layers are used, else the single layer map;
    /// unnormalized and rounded to `f32` precision.
    pub final_map: LocalizationMap<T>,
}

/// Combines per-layer maps at the finest grid among them.
pub fn combine<T: Scalar>(per_layer: &[LocalizationMap<T>], mode: FuseMode) -> Result<LocalizationMap<T>> {
    let final_map = if per_layer.len() == 1 {
        per_layer[0].clone()
    } else {
        let (h, w) = finest_grid(per_layer).ok_or_else(|| Error::Validation("no layers".into()))?;
        fuse(per_layer, h, w, mode)?
    };
    Ok(quantize(&final_map))
}

pub fn class_maps_from_inputs<T: Scalar>(inputs: &[LayerInput<T>], cfg: &PipelineConfig) -> Result<ClassMaps<T>> {
    let per_layer = inputs
        .iter()
        .map(|inp| layer_map(inp, &cfg.discovery))
        .collect::<Result<Vec<_>>>()?;
    let final_map = combine(&per_layer, cfg.fuse_mode)?;
    Ok(ClassMaps { per_layer, final_map })
}

pub fn class_maps<T: Scalar>(files: &BTreeMap<String, LayerFiles>, cfg: &PipelineConfig) -> Result<ClassMaps<T>> {
    let inputs = load_layers::<T>(files, &cfg.layers)?;
    class_maps_from_inputs(&inputs, cfg)
}

/// Final map at image resolution, normalized to [0,1].
pub fn image_map<T: Scalar>(final_map: &LocalizationMap<T>, image_w: usize, image_h: usize) -> Result<LocalizationMap<T>> {
    let up = upsample_bilinear(&final_map.map, image_h, image_w)?;
    Ok(normalize01(&LocalizationMap {
        map: up,
        scale_tag: final_map.scale_tag.clone(),
        normalized: false,
    }))
}

/// Boxes for a final map: upsampled to the image, normalized, segmented.
pub fn boxes_for_map<T: Scalar>(
    final_map: &LocalizationMap<T>,
    seg: &SegmentationConfig,
    image_w: usize,
    image_h: usize,
) -> Result<Vec<BoundingBox>> {
    boxes_from_map(&image_map(final_map, image_w, image_h)?, seg, image_w, image_h)
}

/// Binarized explanation support at image resolution (nearest-neighbour).
pub fn explanation_mask<T: Scalar>(
    final_map: &LocalizationMap<T>,
    delta: f64,
    image_w: usize,
    image_h: usize,
) -> Result<Mask> {
    let bin = binarize_for_explanation(&normalize01(final_map), delta)?;
    Ok(Mask::from_tensor(&upsample_nearest(&bin, image_h, image_w)?))
}

/// Scores a sample given its final map per class.
pub fn evaluate_maps<T: Scalar>(
    sample: &SampleManifest,
    finals: &BTreeMap<usize, LocalizationMap<T>>,
    cfg: &PipelineConfig,
) -> Result<EvalRecord> {
    let mut boxes = BTreeMap::new();
    for (&class, m) in finals {
        boxes.insert(
            class,
            boxes_for_map(m, &cfg.segmentation, sample.image_width, sample.image_height)?,
        );
    }
    let predictions = score_predictions(sample, &boxes);
    let top1_hit = predictions.first().is_some_and(|p| p.hit());
    let top5_hit = predictions.iter().take(5).any(|p| p.hit());

    let mut voc = Vec::new();
    let mut labels = sample.true_labels.clone();
    labels.sort_unstable();
    labels.dedup();
    for class in labels {
        let gt = sample.gt_for_class(class);
        let Some(m) = finals.get(&class) else { continue };
        let mask = explanation_mask(m, cfg.delta, sample.image_width, sample.image_height)?;
        if let Some(value) = voc_loc(&mask, &gt) {
            voc.push(VocScore { class, value });
        }
    }
    Ok(EvalRecord {
        image_id: sample.image_id.clone(),
        predictions,
        top1_hit,
        top5_hit,
        voc_loc: voc,
    })
}

/// Final maps for every class the sample carries gradients for.
pub fn sample_final_maps<T: Scalar>(
    sample: &SampleManifest,
    cfg: &PipelineConfig,
) -> Result<BTreeMap<usize, LocalizationMap<T>>> {
    let mut finals = BTreeMap::new();
    for (class, files) in sample.class_inputs() {
        finals.insert(class, class_maps::<T>(files, cfg)?.final_map);
    }
    Ok(finals)
}

/// Single-shot evaluation. `Ok(None)` marks a sample that cannot be scored
/// (no predictions).
pub fn evaluate_sample<T: Scalar>(sample: &SampleManifest, cfg: &PipelineConfig) -> Result<Option<EvalRecord>> {
    if sample.predicted_classes.is_empty() {
        warn!("{}: no predictions, skipped", sample.image_id);
        return Ok(None);
    }
    let finals = sample_final_maps::<T>(sample, cfg)?;
    evaluate_maps(sample, &finals, cfg).map(Some)
}
