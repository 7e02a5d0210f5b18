//! Synthetic activation/gradient fixtures with planted objects.
//!
//! Every object becomes an anisotropic Gaussian bump, centred on its box,
//! on a random subset of channels of every layer; the channels are dealt out
//! so each carries exactly one object. On the finest grid the bump falls to
//! 0.2 of its peak at the box edge. Coarser grids blur it and respond more
//! weakly to objects that are small relative to their cells. Gradients are
//! the activations plus Gaussian noise, times a gain.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::bbox::BoundingBox;
use crate::error::{Error, Result};
use crate::io::write_tensor;
use crate::manifest::{write_manifest, GtBox, LayerFiles, SampleManifest};
use crate::tensor::Tensor;

/// `sqrt(2·ln 5)`: a unit Gaussian drops to 0.2 at this many sigmas.
const EDGE_SIGMAS: f64 = 1.794_122_5;

#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub name: String,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl GridSpec {
    pub fn new(name: &str, height: usize, width: usize, channels: usize) -> Self {
        GridSpec {
            name: name.into(),
            height,
            width,
            channels,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub seed: u64,
    pub n_images: usize,
    pub image_width: usize,
    pub image_height: usize,
    pub layers: Vec<GridSpec>,
    /// Inclusive range of objects per image.
    pub objects: (usize, usize),
    /// Object area as a fraction of the image area.
    pub scale: (f64, f64),
    pub noise: f64,
    pub n_classes: usize,
    /// Gradients are `gradient_gain · (activations + noise)`.
    pub gradient_gain: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            seed: 0,
            n_images: 1,
            image_width: 224,
            image_height: 224,
            layers: vec![GridSpec::new("conv4", 28, 28, 8), GridSpec::new("conv5", 14, 14, 8)],
            objects: (1, 3),
            scale: (0.05, 0.5),
            noise: 0.02,
            n_classes: 20,
            gradient_gain: 1.0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_images == 0 || self.image_width == 0 || self.image_height == 0 {
            return Err(Error::Config("image count and size must be positive".into()));
        }
        if self.layers.is_empty() {
            return Err(Error::Config("at least one layer grid".into()));
        }
        for g in &self.layers {
            if g.height == 0 || g.width == 0 || g.channels == 0 {
                return Err(Error::Config(format!("grid {} has a zero dimension", g.name)));
            }
            if self.image_width % g.width != 0 || self.image_height % g.height != 0 {
                return Err(Error::Config(format!(
                    "grid {} ({}x{}) does not divide the {}x{} image",
                    g.name, g.height, g.width, self.image_height, self.image_width
                )));
            }
        }
        let (lo, hi) = self.objects;
        if lo == 0 || lo > hi {
            return Err(Error::Config(format!("object count range {lo}..={hi}")));
        }
        let (s0, s1) = self.scale;
        if !(s0 > 0.0 && s0 <= s1 && s1 < 1.0) {
            return Err(Error::Config(format!("scale range ({s0}, {s1}) must lie in (0,1)")));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Config("noise must be >= 0".into()));
        }
        if !(self.gradient_gain > 0.0 && self.gradient_gain.is_finite()) {
            return Err(Error::Config("gradient gain must be > 0".into()));
        }
        if self.n_classes < 5 {
            return Err(Error::Config("need at least 5 classes for top-5 predictions".into()));
        }
        Ok(())
    }
}

/// A planted object in image coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlantedObject {
    pub bbox: BoundingBox,
    /// Area fraction, as sampled.
    pub scale: f64,
}

/// Area of a box as a fraction of the image.
pub fn box_scale(b: &BoundingBox, image_w: usize, image_h: usize) -> f64 {
    (b.width() * b.height()) as f64 / (image_w * image_h) as f64
}

fn separated(a: &BoundingBox, b: &BoundingBox) -> bool {
    let margin = |x: &BoundingBox| 8 + (x.width().max(x.height()) / 4);
    let gap = margin(a).max(margin(b));
    a.x_max + gap < b.x_min || b.x_max + gap < a.x_min || a.y_max + gap < b.y_min || b.y_max + gap < a.y_min
}

fn place_objects(rng: &mut ChaCha8Rng, spec: &SynthSpec) -> Vec<PlantedObject> {
    let (w, h) = (spec.image_width, spec.image_height);
    let count = rng.random_range(spec.objects.0..=spec.objects.1);
    let mut placed: Vec<PlantedObject> = Vec::with_capacity(count);
    for _ in 0..count {
        for _attempt in 0..200 {
            let s = rng.random_range(spec.scale.0..=spec.scale.1);
            let aspect: f64 = rng.random_range(0.75..=1.333);
            let side = (s * (w * h) as f64).sqrt();
            let bw = ((side * aspect.sqrt()).round() as usize).clamp(2, w);
            let bh = ((side / aspect.sqrt()).round() as usize).clamp(2, h);
            let x0 = rng.random_range(0..=w - bw);
            let y0 = rng.random_range(0..=h - bh);
            let bbox = BoundingBox::new(x0, y0, x0 + bw - 1, y0 + bh - 1);
            if placed.iter().all(|p| separated(&p.bbox, &bbox)) {
                placed.push(PlantedObject { bbox, scale: s });
                break;
            }
        }
    }
    placed
}

/// Relative response of a layer whose cells are `cell_px` wide to an object
/// `size_px` across: full on the finest grid, weaker when the object spans
/// few cells.
fn layer_strength(size_px: f64, cell_px: f64, finest_cell_px: f64) -> f64 {
    if cell_px <= finest_cell_px {
        1.0
    } else {
        (size_px / (4.0 * cell_px)).clamp(0.1, 1.0)
    }
}

struct LayerTensors {
    activations: Tensor<f32>,
    gradients: Tensor<f32>,
}

fn render_layer(
    rng: &mut ChaCha8Rng,
    spec: &SynthSpec,
    grid: &GridSpec,
    finest_cell_px: f64,
    objects: &[PlantedObject],
) -> Result<LayerTensors> {
    let (k, gh, gw) = (grid.channels, grid.height, grid.width);
    let cell_x = spec.image_width as f64 / gw as f64;
    let cell_y = spec.image_height as f64 / gh as f64;
    let mut acts = vec![0f64; k * gh * gw];

    // channels dealt round-robin in random order: every channel carries
    // exactly one object and object shares differ by at most one
    let mut assignment: Vec<Vec<usize>> = vec![Vec::new(); objects.len()];
    let order = sample_indices(rng, k, k).into_vec();
    for (n, c) in order.into_iter().enumerate() {
        assignment[n % objects.len()].push(c);
    }
    // coarser cells see a wider receptive field: extra blur variance of
    // cell² − finest_cell²
    let blur2 = cell_x.max(cell_y).powi(2) - finest_cell_px * finest_cell_px;

    for (obj, chans) in objects.iter().zip(&assignment) {
        let b = obj.bbox;
        let cx = (b.x_min + b.x_max + 1) as f64 / 2.0;
        let cy = (b.y_min + b.y_max + 1) as f64 / 2.0;
        let sx = ((b.width() as f64 / 2.0 / EDGE_SIGMAS).powi(2) + blur2).sqrt();
        let sy = ((b.height() as f64 / 2.0 / EDGE_SIGMAS).powi(2) + blur2).sqrt();
        let size_px = ((b.width() * b.height()) as f64).sqrt();
        let strength = layer_strength(size_px, cell_x.max(cell_y), finest_cell_px);
        for &c in chans {
            let gain = strength * rng.random_range(0.85..=1.0);
            for i in 0..gh {
                let y = (i as f64 + 0.5) * cell_y;
                let dy = (y - cy) / sy;
                for j in 0..gw {
                    let x = (j as f64 + 0.5) * cell_x;
                    let dx = (x - cx) / sx;
                    acts[(c * gh + i) * gw + j] += gain * (-0.5 * (dx * dx + dy * dy)).exp();
                }
            }
        }
    }

    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut grads = vec![0f32; acts.len()];
    let mut out_acts = vec![0f32; acts.len()];
    for (idx, a) in acts.iter().enumerate() {
        let bg = spec.noise * rng.random::<f64>();
        let act = a + bg;
        out_acts[idx] = act as f32;
        grads[idx] = (spec.gradient_gain * (act + spec.noise * normal.sample(rng))) as f32;
    }
    Ok(LayerTensors {
        activations: Tensor::new(vec![k, gh, gw], out_acts)?,
        gradients: Tensor::new(vec![k, gh, gw], grads)?,
    })
}

/// One generated image: its manifest entry (paths relative to the output
/// directory) and planted objects.
pub struct GeneratedSample {
    pub manifest: SampleManifest,
    pub objects: Vec<PlantedObject>,
}

/// Writes tensors and `manifest.json` into `out_dir`; returns the manifest path.
pub fn generate(spec: &SynthSpec, out_dir: impl AsRef<Path>) -> Result<PathBuf> {
    let out_dir = out_dir.as_ref();
    let samples = generate_samples(spec, out_dir)?;
    let manifest: Vec<SampleManifest> = samples.into_iter().map(|s| s.manifest).collect();
    let path = out_dir.join("manifest.json");
    write_manifest(&manifest, &path)?;
    Ok(path)
}

/// Like [`generate`] but also returns planted objects, without writing the
/// manifest file.
pub fn generate_samples(spec: &SynthSpec, out_dir: &Path) -> Result<Vec<GeneratedSample>> {
    spec.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let finest_cell_px = spec
        .layers
        .iter()
        .map(|g| (spec.image_width as f64 / g.width as f64).max(spec.image_height as f64 / g.height as f64))
        .fold(f64::INFINITY, f64::min);

    let mut out = Vec::with_capacity(spec.n_images);
    for n in 0..spec.n_images {
        let image_id = format!("synth_{n:05}");
        let class = rng.random_range(0..spec.n_classes);
        let mut predicted = vec![class];
        for other in sample_indices(&mut rng, spec.n_classes - 1, 4) {
            predicted.push(if other >= class { other + 1 } else { other });
        }
        let objects = place_objects(&mut rng, spec);
        let mut layers = std::collections::BTreeMap::new();
        for grid in &spec.layers {
            let t = render_layer(&mut rng, spec, grid, finest_cell_px, &objects)?;
            let act_name = format!("{image_id}.{}.act.msrd", grid.name);
            let grad_name = format!("{image_id}.{}.grad.msrd", grid.name);
            write_tensor(&t.activations, out_dir.join(&act_name))?;
            write_tensor(&t.gradients, out_dir.join(&grad_name))?;
            layers.insert(
                grid.name.clone(),
                LayerFiles {
                    activations: PathBuf::from(act_name),
                    gradients: PathBuf::from(grad_name),
                },
            );
        }
        out.push(GeneratedSample {
            manifest: SampleManifest {
                image_id,
                image_width: spec.image_width,
                image_height: spec.image_height,
                true_labels: vec![class],
                predicted_classes: predicted,
                gt_boxes: objects.iter().map(|o| GtBox { class, bbox: o.bbox }).collect(),
                layers,
                target_class: None,
                class_layers: Default::default(),
                meta: Some(serde_json::json!({"source": "synth", "seed": spec.seed})),
            },
            objects,
        });
    }
    Ok(out)
}
