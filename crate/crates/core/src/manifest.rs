//! Per-image sample manifests.
//!
//! A manifest is a UTF-8 JSON array; each element describes one image:
//!
//! ```json
//! {
//!   "image_id": "img_0001",
//!   "image_width": 224, "image_height": 224,
//!   "true_labels": [3],
//!   "predicted_classes": [3, 7, 1, 0, 9],
//!   "gt_boxes": [{"class": 3, "x_min": 10, "y_min": 20, "x_max": 80, "y_max": 90}],
//!   "layers": {
//!     "conv4": {"activations": "img_0001.conv4.act.msrd", "gradients": "img_0001.conv4.grad.msrd"},
//!     "conv5": {"activations": "img_0001.conv5.act.msrd", "gradients": "img_0001.conv5.grad.msrd"}
//!   }
//! }
//! ```
//!
//! Optional keys: `target_class` (the class `layers` gradients were taken
//! for, default `predicted_classes[0]`), `class_layers` (extra per-class
//! gradient sets keyed by class index, used for Top-5), and a free-form
//! `meta` object. Relative paths resolve against the manifest's directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::bbox::BoundingBox;
use crate::error::{Error, Result};
use crate::io::read_header;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerFiles {
    pub activations: PathBuf,
    pub gradients: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GtBox {
    pub class: usize,
    #[serde(flatten)]
    pub bbox: BoundingBox,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleManifest {
    pub image_id: String,
    pub image_width: usize,
    pub image_height: usize,
    pub true_labels: Vec<usize>,
    pub predicted_classes: Vec<usize>,
    pub gt_boxes: Vec<GtBox>,
    pub layers: BTreeMap<String, LayerFiles>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_class: Option<usize>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub class_layers: BTreeMap<String, BTreeMap<String, LayerFiles>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<Value>,
}

impl SampleManifest {
    /// Class the primary `layers` gradients belong to.
    pub fn target(&self) -> Option<usize> {
        self.target_class.or_else(|| self.predicted_classes.first().copied())
    }

    /// Every `(class, layer files)` set available for this sample, target
    /// class first, the rest in ascending class order.
    pub fn class_inputs(&self) -> Vec<(usize, &BTreeMap<String, LayerFiles>)> {
        let mut out = Vec::new();
        let target = self.target();
        if let Some(t) = target {
            out.push((t, &self.layers));
        }
        let mut extra: Vec<(usize, &BTreeMap<String, LayerFiles>)> = self
            .class_layers
            .iter()
            .filter_map(|(k, v)| k.parse::<usize>().ok().map(|c| (c, v)))
            .filter(|(c, _)| Some(*c) != target)
            .collect();
        extra.sort_by_key(|(c, _)| *c);
        out.extend(extra);
        out
    }

    pub fn gt_for_class(&self, class: usize) -> Vec<BoundingBox> {
        self.gt_boxes
            .iter()
            .filter(|g| g.class == class)
            .map(|g| g.bbox)
            .collect()
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for files in self.layers.values_mut() {
            fix(&mut files.activations);
            fix(&mut files.gradients);
        }
        for set in self.class_layers.values_mut() {
            for files in set.values_mut() {
                fix(&mut files.activations);
                fix(&mut files.gradients);
            }
        }
    }

    fn validate_boxes(&self, index: usize) -> Result<()> {
        for g in &self.gt_boxes {
            if !g.bbox.fits_in(self.image_width, self.image_height) {
                return Err(Error::Validation(format!(
                    "sample {index} ({}): gt box {:?} outside {}x{} image",
                    self.image_id, g.bbox, self.image_width, self.image_height
                )));
            }
        }
        Ok(())
    }

    fn validate_files(&self) -> Result<()> {
        let sets = std::iter::once(&self.layers).chain(self.class_layers.values());
        for set in sets {
            for (name, files) in set {
                let a = read_header(&files.activations)?;
                let g = read_header(&files.gradients)?;
                if a.shape != g.shape {
                    return Err(Error::Validation(format!(
                        "{} layer {name}: activations {:?} vs gradients {:?}",
                        self.image_id, a.shape, g.shape
                    )));
                }
                if a.shape.len() != 3 {
                    return Err(Error::Validation(format!(
                        "{} layer {name}: expected K×H×W, got {:?}",
                        self.image_id, a.shape
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ManifestOptions {
    /// Open every referenced tensor header and check activations/gradients
    /// shapes agree. Otherwise shapes are checked when tensors are loaded.
    pub check_files: bool,
}

const REQUIRED: [&str; 7] = [
    "image_id",
    "image_width",
    "image_height",
    "true_labels",
    "predicted_classes",
    "gt_boxes",
    "layers",
];

pub fn parse_manifest(text: &str, base: &Path, opts: ManifestOptions) -> Result<Vec<SampleManifest>> {
    let root: Value = serde_json::from_str(text)?;
    let items = root.as_array().ok_or_else(|| Error::Schema {
        index: 0,
        field: "<root>".into(),
        message: "manifest must be a JSON array".into(),
    })?;
    let mut out = Vec::with_capacity(items.len());
    for (index, item) in items.iter().enumerate() {
        let obj = item.as_object().ok_or_else(|| Error::Schema {
            index,
            field: "<sample>".into(),
            message: "sample must be an object".into(),
        })?;
        if let Some(missing) = REQUIRED.iter().find(|k| !obj.contains_key(**k)) {
            return Err(Error::Schema {
                index,
                field: missing.to_string(),
                message: "required field missing".into(),
            });
        }
        let mut sample: SampleManifest = serde_json::from_value(item.clone()).map_err(|e| {
            let message = e.to_string();
            let field = REQUIRED
                .iter()
                .chain(["class", "x_min", "y_min", "x_max", "y_max", "activations", "gradients"].iter())
                .find(|k| message.contains(&format!("`{k}`")))
                .map_or_else(|| guess_field(obj), |k| k.to_string());
            Error::Schema {
                index,
                field,
                message,
            }
        })?;
        if sample.image_width == 0 || sample.image_height == 0 {
            return Err(Error::Schema {
                index,
                field: "image_width".into(),
                message: "image dimensions must be positive".into(),
            });
        }
        if sample.predicted_classes.len() > 5 {
            return Err(Error::Schema {
                index,
                field: "predicted_classes".into(),
                message: "at most 5 predictions".into(),
            });
        }
        sample.validate_boxes(index)?;
        sample.resolve(base);
        if opts.check_files {
            sample.validate_files()?;
        }
        out.push(sample);
    }
    Ok(out)
}

/// Best-effort name of the offending field when serde's message does not
/// quote one: the first required field whose value fails to deserialize alone.
fn guess_field(obj: &serde_json::Map<String, Value>) -> String {
    let bad = |k: &str| -> bool {
        let v = &obj[k];
        match k {
            "image_id" => !v.is_string(),
            "image_width" | "image_height" => v.as_u64().is_none(),
            "true_labels" | "predicted_classes" => serde_json::from_value::<Vec<usize>>(v.clone()).is_err(),
            "gt_boxes" => serde_json::from_value::<Vec<GtBox>>(v.clone()).is_err(),
            "layers" => serde_json::from_value::<BTreeMap<String, LayerFiles>>(v.clone()).is_err(),
            _ => false,
        }
    };
    REQUIRED
        .iter()
        .find(|k| bad(k))
        .map_or_else(|| "<sample>".to_string(), |k| k.to_string())
}

pub fn read_manifest(path: impl AsRef<Path>, opts: ManifestOptions) -> Result<Vec<SampleManifest>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_manifest(&text, base, opts)
}

pub fn write_manifest(samples: &[SampleManifest], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(samples)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
