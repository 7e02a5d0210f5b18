//! Discriminative region discovery: local maxima of gradient weight maps.
//!
//! A position qualifies as a local maximum when its value equals the maximum
//! of the `W×W` window centred on it and is strictly greater than both zero
//! and the configured threshold. Windows are clipped at the map border, so
//! edge pixels only compare against neighbours that exist. Plateaus qualify
//! in full. A channel's weight is the mean of its maxima, or zero when it
//! has none.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::grad_weights::GradientWeightMap;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiscoveryConfig {
    /// Odd window side in pixels.
    pub window: usize,
    /// Visit every `stride`-th row and column.
    pub stride: usize,
    /// Maxima must be strictly greater than this.
    pub min_value: f64,
}

impl Default for DiscoveryConfig {
    fn default() -> Self {
        DiscoveryConfig {
            window: 3,
            stride: 1,
            min_value: 0.0,
        }
    }
}

impl DiscoveryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.window % 2 == 0 {
            return Err(Error::Config(format!("window must be odd and positive, got {}", self.window)));
        }
        if self.stride == 0 {
            return Err(Error::Config("stride must be at least 1".into()));
        }
        if !(self.min_value >= 0.0 && self.min_value.is_finite()) {
            return Err(Error::Config(format!("min_value must be >= 0, got {}", self.min_value)));
        }
        Ok(())
    }

    fn radius(&self) -> usize {
        self.window / 2
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Maximum<T> {
    pub i: usize,
    pub j: usize,
    pub value: T,
}

/// Maxima of one channel in visit order, with their mean as the weight.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalMaxima<T> {
    pub points: Vec<Maximum<T>>,
    pub weight: T,
}

impl<T: Scalar> LocalMaxima<T> {
    fn from_points(points: Vec<Maximum<T>>) -> Self {
        let weight = if points.is_empty() {
            T::zero()
        } else {
            points.iter().map(|m| m.value).sum::<T>() / T::from_count(points.len())
        };
        LocalMaxima { points, weight }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Clipped sliding maximum of `src` with the given radius, written to `dst`.
fn sliding_max<T: Scalar>(src: &[T], radius: usize, dst: &mut [T]) {
    let n = src.len();
    let mut deque: VecDeque<usize> = VecDeque::with_capacity(2 * radius + 1);
    let mut next = 0;
    for (pos, out) in dst.iter_mut().enumerate() {
        let hi = (pos + radius).min(n - 1);
        while next <= hi {
            while deque.back().is_some_and(|&b| src[b] <= src[next]) {
                deque.pop_back();
            }
            deque.push_back(next);
            next += 1;
        }
        let lo = pos.saturating_sub(radius);
        while deque.front().is_some_and(|&f| f < lo) {
            deque.pop_front();
        }
        *out = src[*deque.front().expect("window is never empty")];
    }
}

/// Separable `W×W` maximum filter with clipped windows.
pub fn max_filter<T: Scalar>(map: &Tensor<T>, window: usize) -> Tensor<T> {
    let (h, w) = map.hw();
    let r = window / 2;
    let src = map.channel(0);
    let mut rows = vec![T::zero(); h * w];
    for i in 0..h {
        sliding_max(&src[i * w..(i + 1) * w], r, &mut rows[i * w..(i + 1) * w]);
    }
    let mut out = vec![T::zero(); h * w];
    let mut col = vec![T::zero(); h];
    let mut col_out = vec![T::zero(); h];
    for j in 0..w {
        for i in 0..h {
            col[i] = rows[i * w + j];
        }
        sliding_max(&col, r, &mut col_out);
        for i in 0..h {
            out[i * w + j] = col_out[i];
        }
    }
    Tensor::from_parts(vec![h, w], out)
}

fn gate<T: Scalar>(cfg: &DiscoveryConfig) -> T {
    T::from_f64_lossy(cfg.min_value).max(T::zero())
}

/// Local maxima of one `H×W` map.
pub fn find_local_maxima<T: Scalar>(map: &Tensor<T>, cfg: &DiscoveryConfig) -> Result<LocalMaxima<T>> {
    cfg.validate()?;
    map.require_rank(2)?;
    let (h, w) = map.hw();
    let threshold = gate::<T>(cfg);
    let filtered = max_filter(map, cfg.window);
    let mut points = Vec::new();
    for i in (0..h).step_by(cfg.stride) {
        for j in (0..w).step_by(cfg.stride) {
            let v = map[(i, j)];
            if v > threshold && v == filtered[(i, j)] {
                points.push(Maximum { i, j, value: v });
            }
        }
    }
    Ok(LocalMaxima::from_points(points))
}

/// Reference implementation of [`find_local_maxima`]: scans every window
/// directly. Kept deliberately naive for cross-checking.
pub fn brute_force_maxima<T: Scalar>(map: &Tensor<T>, cfg: &DiscoveryConfig) -> Result<LocalMaxima<T>> {
    cfg.validate()?;
    map.require_rank(2)?;
    let (h, w) = map.hw();
    let r = cfg.radius() as isize;
    let threshold = gate::<T>(cfg);
    let mut points = Vec::new();
    let mut i = 0;
    while i < h {
        let mut j = 0;
        while j < w {
            let v = map[(i, j)];
            let mut is_max = true;
            for di in -r..=r {
                for dj in -r..=r {
                    let (y, x) = (i as isize + di, j as isize + dj);
                    if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
                        continue;
                    }
                    if map[(y as usize, x as usize)] > v {
                        is_max = false;
                    }
                }
            }
            if is_max && v > T::zero() && v > threshold {
                points.push(Maximum { i, j, value: v });
            }
            j += cfg.stride;
        }
        i += cfg.stride;
    }
    Ok(LocalMaxima::from_points(points))
}

/// Maxima of every channel of a gradient weight map.
pub fn discover<T: Scalar>(gwm: &GradientWeightMap<T>, cfg: &DiscoveryConfig) -> Result<Vec<LocalMaxima<T>>> {
    let t = gwm.tensor();
    (0..t.channels())
        .map(|k| find_local_maxima(&t.channel_map(k), cfg))
        .collect()
}

pub fn channel_weights<T: Scalar>(gwm: &GradientWeightMap<T>, cfg: &DiscoveryConfig) -> Result<Vec<T>> {
    Ok(discover(gwm, cfg)?.into_iter().map(|m| m.weight).collect())
}
