//! Localization metrics: Top-1/Top-5 localization error and the VOC
//! pixel-ratio score.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::bbox::BoundingBox;
use crate::error::{Error, Result};
use crate::manifest::SampleManifest;
use crate::segmentation::Mask;

/// A localization counts as correct above this IoU (strictly).
pub const IOU_THRESHOLD: f64 = 0.5;

/// Intersection over union with inclusive pixel areas.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection(b).map_or(0, |i| i.area());
    let union = a.area() + b.area() - inter;
    inter as f64 / union as f64
}

/// Best IoU between any predicted box and any ground-truth box.
pub fn best_iou(pred: &[BoundingBox], gt: &[BoundingBox]) -> f64 {
    pred.iter()
        .flat_map(|p| gt.iter().map(move |g| iou(p, g)))
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictionRecord {
    pub class: usize,
    pub class_correct: bool,
    /// Max IoU against ground truth of this class; 0 without a box.
    pub best_iou: f64,
    /// Whether a localization map was available for this class.
    pub has_map: bool,
}

impl PredictionRecord {
    pub fn hit(&self) -> bool {
        self.class_correct && self.best_iou > IOU_THRESHOLD
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VocScore {
    pub class: usize,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRecord {
    pub image_id: String,
    pub predictions: Vec<PredictionRecord>,
    pub top1_hit: bool,
    pub top5_hit: bool,
    pub voc_loc: Vec<VocScore>,
}

/// Scores the top predictions of one sample against its ground truth.
pub fn score_predictions(
    sample: &SampleManifest,
    boxes_per_class: &BTreeMap<usize, Vec<BoundingBox>>,
) -> Vec<PredictionRecord> {
    sample
        .predicted_classes
        .iter()
        .take(5)
        .map(|&class| {
            let class_correct = sample.true_labels.contains(&class);
            let boxes = boxes_per_class.get(&class);
            let best_iou = boxes.map_or(0.0, |b| best_iou(b, &sample.gt_for_class(class)));
            PredictionRecord {
                class,
                class_correct,
                best_iou,
                has_map: boxes.is_some(),
            }
        })
        .collect()
}

/// Whether any of the first `k` predictions is class-correct with a box
/// exceeding the IoU threshold against a ground-truth box of that class.
pub fn topk_localization(
    sample: &SampleManifest,
    boxes_per_class: &BTreeMap<usize, Vec<BoundingBox>>,
    k: usize,
) -> Result<bool> {
    if sample.predicted_classes.is_empty() {
        return Err(Error::Validation(format!("{}: no predictions", sample.image_id)));
    }
    Ok(score_predictions(sample, boxes_per_class)
        .iter()
        .take(k)
        .any(PredictionRecord::hit))
}

/// `inside / (outside + area)` over the union of `gt` boxes, where `inside`
/// and `outside` count set mask pixels. The mask must cover the image the
/// boxes live in. `None` without ground truth.
pub fn voc_loc(mask: &Mask, gt: &[BoundingBox]) -> Option<f64> {
    if gt.is_empty() {
        return None;
    }
    let mut inside = 0usize;
    let mut outside = 0usize;
    let mut area = 0usize;
    for y in 0..mask.height {
        for x in 0..mask.width {
            let in_union = gt.iter().any(|b| b.contains(x, y));
            area += in_union as usize;
            if mask.get(y, x) {
                if in_union {
                    inside += 1;
                } else {
                    outside += 1;
                }
            }
        }
    }
    Some(inside as f64 / (outside + area) as f64)
}

/// Configuration echoed into the report.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalMeta {
    pub layers: Vec<String>,
    pub window: usize,
    pub stride: usize,
    pub min_value: f64,
    pub tau: f64,
    pub mode: String,
    pub delta: f64,
    pub fuse_raw: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSummary {
    pub meta: EvalMeta,
    pub n_images: usize,
    pub top1_error: f64,
    pub top5_error: f64,
    /// `None` when no (image, label) pair produced a score.
    pub mean_voc_loc: Option<f64>,
    pub skipped: usize,
}

/// Folds records in `image_id` order.
pub fn aggregate(records: &[EvalRecord], meta: EvalMeta, skipped: usize) -> Result<EvalSummary> {
    if records.is_empty() {
        return Err(Error::Validation("no evaluated images".into()));
    }
    let mut ordered: Vec<&EvalRecord> = records.iter().collect();
    ordered.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    let n = ordered.len();
    let top1 = ordered.iter().filter(|r| r.top1_hit).count();
    let top5 = ordered.iter().filter(|r| r.top5_hit || r.top1_hit).count();
    let mut voc_sum = 0.0;
    let mut voc_n = 0usize;
    for r in &ordered {
        for v in &r.voc_loc {
            voc_sum += v.value;
            voc_n += 1;
        }
    }
    let err = |hits: usize| 100.0 * (1.0 - hits as f64 / n as f64);
    Ok(EvalSummary {
        meta,
        n_images: n,
        top1_error: err(top1),
        top5_error: err(top5),
        mean_voc_loc: (voc_n > 0).then(|| voc_sum / voc_n as f64),
        skipped,
    })
}

fn f6(v: f64) -> String {
    format!("{v:.6}")
}

fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

impl EvalSummary {
    /// Deterministic JSON report; floats carry exactly six decimals.
    pub fn to_json(&self) -> String {
        let m = &self.meta;
        let layers: Vec<String> = m.layers.iter().map(|l| json_str(l)).collect();
        let mut s = String::new();
        s.push_str("{\n  \"meta\": {\n");
        let _ = writeln!(s, "    \"layers\": [{}],", layers.join(", "));
        let _ = writeln!(s, "    \"window\": {},", m.window);
        let _ = writeln!(s, "    \"stride\": {},", m.stride);
        let _ = writeln!(s, "    \"min_value\": {},", f6(m.min_value));
        let _ = writeln!(s, "    \"tau\": {},", f6(m.tau));
        let _ = writeln!(s, "    \"mode\": {},", json_str(&m.mode));
        let _ = writeln!(s, "    \"delta\": {},", f6(m.delta));
        let _ = writeln!(s, "    \"fuse_raw\": {}", m.fuse_raw);
        s.push_str("  },\n");
        let _ = writeln!(s, "  \"n_images\": {},", self.n_images);
        let _ = writeln!(s, "  \"top1_error\": {},", f6(self.top1_error));
        let _ = writeln!(s, "  \"top5_error\": {},", f6(self.top5_error));
        let voc = self.mean_voc_loc.map_or_else(|| "null".to_string(), f6);
        let _ = writeln!(s, "  \"mean_voc_loc\": {voc},");
        let _ = writeln!(s, "  \"skipped\": {}", self.skipped);
        s.push_str("}\n");
        s
    }

    /// Aligned text table with one row for this configuration.
    pub fn to_table(&self) -> String {
        let label = format!("{} (W={})", self.meta.layers.join("+"), self.meta.window);
        let voc = self.mean_voc_loc.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        let width = label.len().max(6);
        let mut s = String::new();
        let _ = writeln!(s, "{:<width$}  {:>11}  {:>11}  {:>7}  {:>6}", "Layers", "top-1 error", "top-5 error", "VOC Loc", "images");
        let _ = writeln!(s, "{}", "-".repeat(width + 44));
        let _ = writeln!(
            s,
            "{:<width$}  {:>11.2}  {:>11.2}  {:>7}  {:>6}",
            label, self.top1_error, self.top5_error, voc, self.n_images
        );
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::GtBox;

    fn b(x0: usize, y0: usize, x1: usize, y1: usize) -> BoundingBox {
        BoundingBox::new(x0, y0, x1, y1)
    }

    fn sample(preds: Vec<usize>, gt: Vec<(usize, BoundingBox)>) -> SampleManifest {
        SampleManifest {
            image_id: "s".into(),
            image_width: 100,
            image_height: 100,
            true_labels: gt.iter().map(|(c, _)| *c).collect(),
            predicted_classes: preds,
            gt_boxes: gt.into_iter().map(|(class, bbox)| GtBox { class, bbox }).collect(),
            layers: BTreeMap::new(),
            target_class: None,
            class_layers: BTreeMap::new(),
            meta: None,
        }
    }

    /// (0,0,9,9) slid `s` pixels along x; IoU with the original is
    /// (10−s)·10 / ((10+s)·10).
    fn shifted(s: usize) -> BoundingBox {
        b(s, 0, 9 + s, 9)
    }

    #[test]
    fn iou_cases() {
        let a = b(0, 0, 9, 9);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &b(20, 20, 30, 30)), 0.0);
        // inter 5×10 = 50, union 100 + 100 − 50 = 150
        assert_eq!(iou(&a, &b(5, 0, 14, 9)), 50.0 / 150.0);
        assert_eq!(iou(&a, &b(5, 0, 14, 9)), iou(&b(5, 0, 14, 9), &a));
    }

    #[test]
    fn topk_cases() {
        let gt = b(0, 0, 9, 9);
        let s = sample(vec![3], vec![(3, gt)]);
        // shift 2: 80/120 ≈ 0.67
        let boxes = BTreeMap::from([(3, vec![shifted(2)])]);
        assert!(topk_localization(&s, &boxes, 1).unwrap());

        // IoU exactly 0.5: box (0,0,9,19) vs (0,0,9,9): 100/200
        let half = BTreeMap::from([(3, vec![b(0, 0, 9, 19)])]);
        assert_eq!(iou(&b(0, 0, 9, 19), &gt), 0.5);
        assert!(!topk_localization(&s, &half, 1).unwrap());

        let s = sample(vec![7, 8, 3, 1, 2], vec![(3, gt)]);
        let boxes = BTreeMap::from([(7, vec![gt]), (8, vec![gt]), (3, vec![shifted(1)])]);
        assert!(iou(&shifted(1), &gt) > 0.7);
        assert!(!topk_localization(&s, &boxes, 1).unwrap());
        assert!(topk_localization(&s, &boxes, 5).unwrap());
    }

    #[test]
    fn topk_without_predictions_errors() {
        let s = sample(vec![], vec![(3, b(0, 0, 1, 1))]);
        assert!(topk_localization(&s, &BTreeMap::new(), 1).is_err());
    }

    fn mask_from(w: usize, h: usize, on: impl Fn(usize, usize) -> bool) -> Mask {
        Mask::new(h, w, (0..h).flat_map(|y| (0..w).map(move |x| (x, y))).map(|(x, y)| on(x, y)).collect())
    }

    #[test]
    fn voc_cases() {
        let gt = b(0, 0, 9, 9);
        assert_eq!(voc_loc(&mask_from(30, 30, |x, y| gt.contains(x, y)), &[gt]), Some(1.0));
        assert_eq!(voc_loc(&mask_from(30, 30, |x, _| x >= 20), &[gt]), Some(0.0));
        // 50 inside (rows 0..5), 25 outside (5×5 block at 20..25)
        let m = mask_from(30, 30, |x, y| (x < 10 && y < 5) || ((20..25).contains(&x) && (20..25).contains(&y)));
        assert_eq!(m.count(), 75);
        assert_eq!(voc_loc(&m, &[gt]), Some(50.0 / 125.0));
        assert_eq!(voc_loc(&m, &[]), None);
    }

    #[test]
    fn voc_uses_box_union() {
        let boxes = [b(0, 0, 9, 9), b(5, 5, 14, 14)];
        let m = mask_from(20, 20, |x, y| boxes.iter().any(|bb| bb.contains(x, y)));
        assert_eq!(voc_loc(&m, &boxes), Some(1.0));
    }

    fn rec(id: &str, t1: bool, t5: bool, voc: &[f64]) -> EvalRecord {
        EvalRecord {
            image_id: id.into(),
            predictions: vec![],
            top1_hit: t1,
            top5_hit: t5,
            voc_loc: voc.iter().map(|&value| VocScore { class: 0, value }).collect(),
        }
    }

    #[test]
    fn aggregate_cases() {
        let s = aggregate(&[rec("a", true, true, &[]), rec("b", false, true, &[])], EvalMeta::default(), 0).unwrap();
        assert_eq!((s.top1_error, s.top5_error), (50.0, 0.0));
        let s = aggregate(&[rec("a", true, true, &[]), rec("b", true, true, &[])], EvalMeta::default(), 0).unwrap();
        assert_eq!((s.top1_error, s.top5_error), (0.0, 0.0));
        let s = aggregate(&[rec("a", true, true, &[1.0, 0.4]), rec("b", false, false, &[0.0])], EvalMeta::default(), 3).unwrap();
        assert!((s.mean_voc_loc.unwrap() - 1.4 / 3.0).abs() < 1e-12);
        assert!(s.to_json().contains("\"mean_voc_loc\": 0.466667"));
        assert_eq!(s.skipped, 3);
        assert!(aggregate(&[], EvalMeta::default(), 0).is_err());
    }

    #[test]
    fn report_is_deterministic_and_parseable() {
        let s = aggregate(&[rec("b", false, true, &[0.5]), rec("a", true, true, &[])], EvalMeta {
            layers: vec!["conv4".into(), "conv5".into()],
            window: 3,
            stride: 1,
            tau: 0.2,
            mode: "largest".into(),
            delta: 0.25,
            ..Default::default()
        }, 0).unwrap();
        let json = s.to_json();
        assert_eq!(json, s.to_json());
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["n_images"], 2);
        assert!(json.contains("\"top1_error\": 50.000000"));
        assert!(json.contains("\"delta\": 0.250000"));
        assert!(s.to_table().contains("conv4+conv5"));
    }
}
