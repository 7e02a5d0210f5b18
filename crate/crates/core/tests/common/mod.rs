#![allow(dead_code)]

use std::collections::VecDeque;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use msrd::segmentation::Mask;
use msrd::synth::GeneratedSample;
use msrd::{SampleManifest, Tensor};

/// 8-connected components by breadth-first flood fill, each component's
/// pixels sorted row-major, components ordered by their first pixel.
pub fn flood_fill(mask: &Mask) -> Vec<Vec<(usize, usize)>> {
    let (h, w) = (mask.height, mask.width);
    let mut seen = vec![false; h * w];
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !mask.get(y, x) || seen[y * w + x] {
                continue;
            }
            let mut comp = Vec::new();
            let mut queue = VecDeque::from([(y, x)]);
            seen[y * w + x] = true;
            while let Some((cy, cx)) = queue.pop_front() {
                comp.push((cy, cx));
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let (ny, nx) = (cy as i64 + dy, cx as i64 + dx);
                        if ny < 0 || nx < 0 || ny >= h as i64 || nx >= w as i64 {
                            continue;
                        }
                        let (ny, nx) = (ny as usize, nx as usize);
                        if mask.get(ny, nx) && !seen[ny * w + nx] {
                            seen[ny * w + nx] = true;
                            queue.push_back((ny, nx));
                        }
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
    }
    out
}

pub fn random_mask(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Mask {
    let density: f64 = rng.random_range(0.05..0.7);
    Mask::new(h, w, (0..h * w).map(|_| rng.random_bool(density)).collect())
}

/// Map with a mix of smooth bumps, quantized plateaus and negative values.
pub fn random_map(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Tensor<f64> {
    let style = rng.random_range(0..3);
    let data = (0..h * w)
        .map(|_| match style {
            0 => rng.random_range(-0.2..1.0),
            1 => f64::from(rng.random_range(-1i32..4)) / 4.0,
            _ => {
                if rng.random_bool(0.3) {
                    0.1
                } else {
                    rng.random_range(0.0..0.3)
                }
            }
        })
        .collect();
    Tensor::new(vec![h, w], data).unwrap()
}

/// Manifest entries of generated samples with paths made absolute.
pub fn resolved(samples: &[GeneratedSample], dir: &Path) -> Vec<SampleManifest> {
    samples
        .iter()
        .map(|s| {
            let mut m = s.manifest.clone();
            for f in m.layers.values_mut() {
                f.activations = dir.join(&f.activations);
                f.gradients = dir.join(&f.gradients);
            }
            m
        })
        .collect()
}
