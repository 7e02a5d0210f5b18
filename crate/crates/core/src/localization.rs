//! Localization maps: per-layer assembly, resampling, fusion, normalization.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct LocalizationMap<T> {
    pub map: Tensor<T>,
    /// Originating layer name, or `"fused"`.
    pub scale_tag: String,
    pub normalized: bool,
}

impl<T: Scalar> LocalizationMap<T> {
    /// Wraps a nonnegative `H×W` tensor as an unnormalized map.
    pub fn new(map: Tensor<T>, scale_tag: impl Into<String>) -> Result<Self> {
        map.require_rank(2)?;
        if map.min_value() < T::zero() {
            return Err(Error::Validation("localization maps must be nonnegative".into()));
        }
        Ok(LocalizationMap {
            map,
            scale_tag: scale_tag.into(),
            normalized: false,
        })
    }

    pub fn hw(&self) -> (usize, usize) {
        self.map.hw()
    }
}

/// How per-layer maps are combined.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FuseMode {
    /// Normalize each map to [0,1], upsample, then sum.
    #[default]
    Normalized,
    /// Upsample and sum the maps as they are.
    Raw,
}

/// `max(0, Σ_k w_k·A_k)` over the channels of `activations`.
pub fn layer_locmap<T: Scalar>(
    activations: &Tensor<T>,
    weights: &[T],
    scale_tag: impl Into<String>,
) -> Result<LocalizationMap<T>> {
    activations.require_rank(3)?;
    if weights.len() != activations.channels() {
        return Err(Error::Shape(format!(
            "{} channel weights for {} channels",
            weights.len(),
            activations.channels()
        )));
    }
    let (h, w) = activations.hw();
    let mut acc = vec![T::zero(); h * w];
    for (k, &wk) in weights.iter().enumerate() {
        if wk == T::zero() {
            continue;
        }
        for (dst, &a) in acc.iter_mut().zip(activations.channel(k)) {
            *dst = *dst + wk * a;
        }
    }
    for v in &mut acc {
        *v = v.max(T::zero());
    }
    Ok(LocalizationMap {
        map: Tensor::new(vec![h, w], acc)?,
        scale_tag: scale_tag.into(),
        normalized: false,
    })
}

/// `a + (b − a)·t`, clamped to the closed interval spanned by `a` and `b` so
/// resampled values never leave the source range.
#[inline]
fn lerp<T: Scalar>(a: T, b: T, t: T) -> T {
    let v = a + (b - a) * t;
    v.max(a.min(b)).min(a.max(b))
}

/// Source index pair and fraction for each destination index, half-pixel
/// centres: `src = (dst + 0.5)·(in/out) − 0.5`, clamped to `[0, in−1]`.
fn sample_grid<T: Scalar>(input: usize, output: usize) -> Vec<(usize, usize, T)> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|d| {
            let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (input - 1) as f64);
            let lo = s.floor() as usize;
            let hi = (lo + 1).min(input - 1);
            (lo, hi, T::from_f64_lossy(s - lo as f64))
        })
        .collect()
}

pub fn upsample_bilinear<T: Scalar>(map: &Tensor<T>, out_h: usize, out_w: usize) -> Result<Tensor<T>> {
    map.require_rank(2)?;
    if out_h == 0 || out_w == 0 {
        return Err(Error::Shape(format!("output size {out_h}x{out_w}")));
    }
    let (h, w) = map.hw();
    if (h, w) == (out_h, out_w) {
        return Ok(map.clone());
    }
    let rows = sample_grid::<T>(h, out_h);
    let cols = sample_grid::<T>(w, out_w);
    let mut out = Vec::with_capacity(out_h * out_w);
    for &(r0, r1, fy) in &rows {
        for &(c0, c1, fx) in &cols {
            let top = lerp(map[(r0, c0)], map[(r0, c1)], fx);
            let bottom = lerp(map[(r1, c0)], map[(r1, c1)], fx);
            out.push(lerp(top, bottom, fy));
        }
    }
    Ok(Tensor::from_parts(vec![out_h, out_w], out))
}

/// Nearest-neighbour resampling with the same half-pixel convention; used for
/// binary masks.
pub fn upsample_nearest<T: Scalar>(map: &Tensor<T>, out_h: usize, out_w: usize) -> Result<Tensor<T>> {
    map.require_rank(2)?;
    if out_h == 0 || out_w == 0 {
        return Err(Error::Shape(format!("output size {out_h}x{out_w}")));
    }
    let (h, w) = map.hw();
    let pick = |input: usize, output: usize| -> Vec<usize> {
        (0..output)
            .map(|d| (((d as f64 + 0.5) * input as f64 / output as f64).floor() as usize).min(input - 1))
            .collect()
    };
    let rows = pick(h, out_h);
    let cols = pick(w, out_w);
    let mut out = Vec::with_capacity(out_h * out_w);
    for &r in &rows {
        for &c in &cols {
            out.push(map[(r, c)]);
        }
    }
    Ok(Tensor::from_parts(vec![out_h, out_w], out))
}

pub fn normalize01<T: Scalar>(map: &LocalizationMap<T>) -> LocalizationMap<T> {
    let max = map.map.max_value();
    let data = if max > T::zero() {
        map.map.data().iter().map(|&v| v / max).collect()
    } else {
        map.map.data().to_vec()
    };
    LocalizationMap {
        map: Tensor::from_parts(map.map.shape().to_vec(), data),
        scale_tag: map.scale_tag.clone(),
        normalized: true,
    }
}

/// Upsamples every map to `target_h × target_w` and sums them. The result is
/// left unnormalized.
pub fn fuse<T: Scalar>(
    maps: &[LocalizationMap<T>],
    target_h: usize,
    target_w: usize,
    mode: FuseMode,
) -> Result<LocalizationMap<T>> {
    if maps.is_empty() {
        return Err(Error::Validation("nothing to fuse".into()));
    }
    let mut acc = vec![T::zero(); target_h * target_w];
    for m in maps {
        let src = match mode {
            FuseMode::Normalized => normalize01(m).map,
            FuseMode::Raw => m.map.clone(),
        };
        let up = upsample_bilinear(&src, target_h, target_w)?;
        for (dst, &v) in acc.iter_mut().zip(up.data()) {
            *dst = *dst + v;
        }
    }
    Ok(LocalizationMap {
        map: Tensor::new(vec![target_h, target_w], acc)?,
        scale_tag: if maps.len() == 1 {
            maps[0].scale_tag.clone()
        } else {
            "fused".into()
        },
        normalized: false,
    })
}

/// Largest grid among `maps`, by pixel count.
pub fn finest_grid<T: Scalar>(maps: &[LocalizationMap<T>]) -> Option<(usize, usize)> {
    maps.iter().map(|m| m.hw()).max_by_key(|(h, w)| h * w)
}

/// 1 where the map exceeds `delta`, else 0.
pub fn binarize_for_explanation<T: Scalar>(map: &LocalizationMap<T>, delta: f64) -> Result<Tensor<T>> {
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::Config(format!("delta must lie in [0,1), got {delta}")));
    }
    let d = T::from_f64_lossy(delta);
    Ok(Tensor::from_parts(
        map.map.shape().to_vec(),
        map.map
            .data()
            .iter()
            .map(|&v| if v > d { T::one() } else { T::zero() })
            .collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lm(rows: &[&[f64]]) -> LocalizationMap<f64> {
        LocalizationMap::new(Tensor::from_rows(rows).unwrap(), "t").unwrap()
    }

    #[test]
    fn layer_map_cases() {
        let a = Tensor::new(vec![2, 1, 2], vec![1.0, 3.0, 5.0, 5.0]).unwrap();
        assert_eq!(layer_locmap(&a, &[0.0, 0.0], "c").unwrap().map.data(), &[0.0, 0.0]);
        let one = Tensor::new(vec![1, 1, 2], vec![1.0, 3.0]).unwrap();
        assert_eq!(layer_locmap(&one, &[2.0], "c").unwrap().map.data(), &[2.0, 6.0]);
        let two = Tensor::new(vec![2, 1, 1], vec![2.0, 3.0]).unwrap();
        assert_eq!(layer_locmap(&two, &[1.0, -1.0], "c").unwrap().map.data(), &[0.0]);
        assert!(layer_locmap(&two, &[1.0], "c").is_err());
    }

    #[test]
    fn bilinear_half_pixel_row() {
        let src = Tensor::from_rows(&[&[0.0f64, 1.0], &[0.0, 1.0]]).unwrap();
        let up = upsample_bilinear(&src, 2, 4).unwrap();
        // independent evaluation of (d + 0.5)·0.5 − 0.5 → -0.25, 0.25, 0.75, 1.25
        let oracle: Vec<f64> = (0..4)
            .map(|d| ((d as f64 + 0.5) * 0.5 - 0.5).clamp(0.0, 1.0))
            .collect();
        assert_eq!(oracle, vec![0.0, 0.25, 0.75, 1.0]);
        assert_eq!(&up.data()[..4], oracle.as_slice());
        assert_eq!(&up.data()[4..], oracle.as_slice());
    }

    #[test]
    fn bilinear_keeps_constants_and_single_pixels() {
        let c = Tensor::filled(vec![3, 5], 0.1f64).unwrap();
        assert!(upsample_bilinear(&c, 7, 11).unwrap().data().iter().all(|v| *v == 0.1));
        let single = Tensor::filled(vec![1, 1], 0.37f32).unwrap();
        assert!(upsample_bilinear(&single, 4, 9).unwrap().data().iter().all(|v| *v == 0.37));
    }

    #[test]
    fn fuse_raw_constants() {
        let c5 = LocalizationMap::new(Tensor::filled(vec![14, 14], 1.0f64).unwrap(), "conv5").unwrap();
        let c4 = LocalizationMap::new(Tensor::filled(vec![28, 28], 2.0f64).unwrap(), "conv4").unwrap();
        let raw = fuse(&[c5.clone(), c4.clone()], 28, 28, FuseMode::Raw).unwrap();
        assert!(raw.map.data().iter().all(|v| *v == 3.0));
        let norm = fuse(&[c5, c4], 28, 28, FuseMode::Normalized).unwrap();
        assert!(norm.map.data().iter().all(|v| *v == 2.0));
        assert_eq!(norm.scale_tag, "fused");
    }

    #[test]
    fn fuse_edge_cases() {
        let z = lm(&[&[0.0, 0.0]]);
        assert!(fuse(&[z.clone(), z.clone()], 1, 2, FuseMode::Normalized)
            .unwrap()
            .map
            .data()
            .iter()
            .all(|v| *v == 0.0));
        let single = lm(&[&[1.0, 2.0]]);
        assert_eq!(fuse(&[single.clone()], 1, 2, FuseMode::Raw).unwrap().map, single.map);
        assert!(fuse::<f64>(&[], 1, 1, FuseMode::Raw).is_err());
    }

    #[test]
    fn normalize_cases() {
        let n = normalize01(&lm(&[&[0.0, 2.0], &[4.0, 8.0]]));
        assert_eq!(n.map.data(), &[0.0, 0.25, 0.5, 1.0]);
        assert!(n.normalized);
        let z = normalize01(&lm(&[&[0.0, 0.0]]));
        assert_eq!(z.map.data(), &[0.0, 0.0]);
    }

    #[test]
    fn binarize_cases() {
        let m = lm(&[&[0.2, 0.3]]);
        assert_eq!(binarize_for_explanation(&m, 0.25).unwrap().data(), &[0.0, 1.0]);
        let m = lm(&[&[0.0, 0.3, 1e-9]]);
        assert_eq!(binarize_for_explanation(&m, 0.0).unwrap().data(), &[0.0, 1.0, 1.0]);
        assert!(binarize_for_explanation(&lm(&[&[0.0]]), 0.25).unwrap().data() == [0.0]);
        assert!(binarize_for_explanation(&m, 1.0).is_err());
    }

    #[test]
    fn nearest_keeps_binary_values() {
        let m = Tensor::from_rows(&[&[0.0f64, 1.0], &[1.0, 0.0]]).unwrap();
        let up = upsample_nearest(&m, 4, 4).unwrap();
        assert_eq!(up.data(), &[0., 0., 1., 1., 0., 0., 1., 1., 1., 1., 0., 0., 1., 1., 0., 0.]);
    }

    fn nonneg_map() -> impl Strategy<Value = Tensor<f64>> {
        (1usize..=12, 1usize..=12).prop_flat_map(|(h, w)| {
            prop::collection::vec(0.0f64..10.0, h * w).prop_map(move |d| Tensor::new(vec![h, w], d).unwrap())
        })
    }

    proptest! {
        #[test]
        fn upsample_stays_in_range(t in nonneg_map(), oh in 1usize..40, ow in 1usize..40) {
            let up = upsample_bilinear(&t, oh, ow).unwrap();
            let (lo, hi) = (t.min_value(), t.max_value());
            prop_assert!(up.data().iter().all(|v| *v >= lo && *v <= hi));
        }

        #[test]
        fn normalize_is_idempotent_and_keeps_argmax(t in nonneg_map()) {
            let m = LocalizationMap::new(t, "t").unwrap();
            let once = normalize01(&m);
            prop_assert_eq!(&normalize01(&once).map, &once.map);
            prop_assert_eq!(once.map.argmax(), m.map.argmax());
            let max = once.map.max_value();
            prop_assert!(max == 1.0 || max == 0.0);
        }

        #[test]
        fn fused_dominates_inputs(a in nonneg_map(), b in nonneg_map()) {
            let maps = [LocalizationMap::new(a, "a").unwrap(), LocalizationMap::new(b, "b").unwrap()];
            let (th, tw) = finest_grid(&maps).unwrap();
            for mode in [FuseMode::Raw, FuseMode::Normalized] {
                let fused = fuse(&maps, th, tw, mode).unwrap();
                for m in &maps {
                    let src = if mode == FuseMode::Raw { m.map.clone() } else { normalize01(m).map };
                    let up = upsample_bilinear(&src, th, tw).unwrap();
                    prop_assert!(fused.map.data().iter().zip(up.data()).all(|(f, u)| f >= u));
                }
            }
        }

        #[test]
        fn layer_map_is_positively_homogeneous(
            k in 1usize..4, h in 1usize..6, w in 1usize..6,
            seed in prop::collection::vec(0.0f64..1.0, 4 * 36 + 4),
            e in -2i32..3,
        ) {
            let lambda = 2f64.powi(e);
            let acts = Tensor::new(vec![k, h, w], seed[..k * h * w].to_vec()).unwrap();
            let weights: Vec<f64> = seed[seed.len() - k..].iter().map(|v| v - 0.3).collect();
            let scaled: Vec<f64> = weights.iter().map(|v| v * lambda).collect();
            let a = layer_locmap(&acts, &weights, "x").unwrap();
            let b = layer_locmap(&acts, &scaled, "x").unwrap();
            for (p, q) in a.map.data().iter().zip(b.map.data()) {
                prop_assert_eq!(p * lambda, *q);
            }
            prop_assert_eq!(a.map.argmax(), b.map.argmax());
        }
    }
}
