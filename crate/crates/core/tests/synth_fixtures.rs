mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use msrd::eval::iou;
use msrd::grad_weights::alpha_maps;
use msrd::manifest::{read_manifest, ManifestOptions};
use msrd::pipeline::{boxes_for_map, load_layers, class_maps, PipelineConfig};
use msrd::synth::{generate, generate_samples};
use msrd::SynthSpec;

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

#[test]
fn one_image_one_object_layout() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthSpec {
        seed: 1,
        n_images: 1,
        objects: (1, 1),
        ..Default::default()
    };
    let path = generate(&spec, dir.path()).unwrap();
    let samples = read_manifest(&path, ManifestOptions { check_files: true }).unwrap();
    assert_eq!(samples.len(), 1);
    assert!(!samples[0].gt_boxes.is_empty());
    let files = tree(dir.path());
    assert_eq!(files.keys().filter(|k| k.ends_with(".msrd")).count(), 4);
    assert_eq!(samples[0].predicted_classes.len(), 5);
    assert_eq!(samples[0].predicted_classes[0], samples[0].true_labels[0]);
}

#[test]
fn same_seed_same_bytes() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let spec = SynthSpec {
        seed: 42,
        n_images: 5,
        ..Default::default()
    };
    generate(&spec, a.path()).unwrap();
    generate(&spec, b.path()).unwrap();
    assert_eq!(tree(a.path()), tree(b.path()));

    let c = tempfile::tempdir().unwrap();
    generate(&SynthSpec { seed: 43, ..spec }, c.path()).unwrap();
    assert_ne!(tree(a.path()), tree(c.path()));
}

#[test]
fn invalid_specs_rejected() {
    let bad = [
        SynthSpec { scale: (0.0, 0.5), ..Default::default() },
        SynthSpec { scale: (0.6, 0.5), ..Default::default() },
        SynthSpec { objects: (0, 2), ..Default::default() },
        SynthSpec { image_width: 220, ..Default::default() },
        SynthSpec { n_classes: 3, ..Default::default() },
        SynthSpec { gradient_gain: 0.0, ..Default::default() },
    ];
    for spec in bad {
        assert!(spec.validate().is_err(), "{spec:?}");
    }
}

/// Mean α over conv4 cells whose centres fall in each object's box beats the
/// mean over cells outside every box.
#[test]
fn planted_objects_raise_conv4_alpha() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthSpec {
        seed: 9,
        n_images: 30,
        ..Default::default()
    };
    let samples = generate_samples(&spec, dir.path()).unwrap();
    let manifests = common::resolved(&samples, dir.path());
    for (s, m) in samples.iter().zip(&manifests) {
        let input = &load_layers::<f64>(&m.layers, &["conv4".to_string()]).unwrap()[0];
        let alpha = alpha_maps(&input.activations, &input.gradients).unwrap();
        let t = alpha.tensor();
        let (k, (h, w)) = (t.channels(), t.hw());
        let cell = spec.image_width / w;
        let centre = |i: usize| i * cell + cell / 2;
        let inside = |b: &msrd::BoundingBox, i: usize, j: usize| b.contains(centre(j), centre(i));

        let (mut bg_sum, mut bg_n) = (0.0, 0usize);
        for i in 0..h {
            for j in 0..w {
                if s.objects.iter().all(|o| !inside(&o.bbox, i, j)) {
                    bg_sum += (0..k).map(|c| t[(c, i, j)]).sum::<f64>();
                    bg_n += k;
                }
            }
        }
        let bg = bg_sum / bg_n as f64;
        for o in &s.objects {
            let (mut sum, mut n) = (0.0, 0usize);
            for i in 0..h {
                for j in 0..w {
                    if inside(&o.bbox, i, j) {
                        sum += (0..k).map(|c| t[(c, i, j)]).sum::<f64>();
                        n += k;
                    }
                }
            }
            if n > 0 {
                assert!(sum / n as f64 > bg, "{}: object {:?} mean {} vs background {bg}", m.image_id, o.bbox, sum / n as f64);
            }
        }
    }
}

#[test]
fn half_image_object_is_localized() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthSpec {
        seed: 3,
        n_images: 10,
        objects: (1, 1),
        scale: (0.5, 0.5),
        ..Default::default()
    };
    let samples = generate_samples(&spec, dir.path()).unwrap();
    let cfg = PipelineConfig::default();
    for (s, m) in samples.iter().zip(common::resolved(&samples, dir.path())) {
        let maps = class_maps::<f64>(&m.layers, &cfg).unwrap();
        let boxes = boxes_for_map(&maps.final_map, &cfg.segmentation, m.image_width, m.image_height).unwrap();
        assert_eq!(boxes.len(), 1);
        let v = iou(&boxes[0], &s.objects[0].bbox);
        assert!(v > 0.5, "{}: iou {v}", m.image_id);
    }
}
