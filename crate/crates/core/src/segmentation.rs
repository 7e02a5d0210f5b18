//! Threshold segmentation, 8-connected component labelling and box extraction.

use crate::bbox::BoundingBox;
use crate::error::{Error, Result};
use crate::localization::LocalizationMap;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum BoxMode {
    /// One box around the component with the most pixels.
    #[default]
    Largest,
    /// One box per component.
    All,
}

impl std::str::FromStr for BoxMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "largest" => Ok(BoxMode::Largest),
            "all" => Ok(BoxMode::All),
            other => Err(Error::Config(format!("unknown box mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for BoxMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BoxMode::Largest => "largest",
            BoxMode::All => "all",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SegmentationConfig {
    /// Fraction of the map maximum a pixel must exceed.
    pub tau: f64,
    pub mode: BoxMode,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        SegmentationConfig {
            tau: 0.2,
            mode: BoxMode::Largest,
        }
    }
}

impl SegmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.tau) {
            return Err(Error::Config(format!("tau must lie in [0,1), got {}", self.tau)));
        }
        Ok(())
    }
}

/// Row-major binary image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    pub height: usize,
    pub width: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn new(height: usize, width: usize, data: Vec<bool>) -> Self {
        assert_eq!(height * width, data.len());
        Mask { height, width, data }
    }

    pub fn from_tensor<T: Scalar>(t: &Tensor<T>) -> Self {
        let (h, w) = t.hw();
        Mask::new(h, w, t.channel(0).iter().map(|v| *v != T::zero()).collect())
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|b| **b).count()
    }

    pub fn transpose(&self) -> Mask {
        let mut data = vec![false; self.data.len()];
        for y in 0..self.height {
            for x in 0..self.width {
                data[x * self.height + y] = self.get(y, x);
            }
        }
        Mask::new(self.width, self.height, data)
    }
}

/// An 8-connected set of pixels, `(y, x)` in row-major order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Component {
    pub pixels: Vec<(usize, usize)>,
}

impl Component {
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    /// Tight box in mask coordinates.
    pub fn bounds(&self) -> BoundingBox {
        let (mut y0, mut x0, mut y1, mut x1) = (usize::MAX, usize::MAX, 0, 0);
        for &(y, x) in &self.pixels {
            y0 = y0.min(y);
            x0 = x0.min(x);
            y1 = y1.max(y);
            x1 = x1.max(x);
        }
        BoundingBox::new(x0, y0, x1, y1)
    }
}

/// Pixels strictly above `tau · max(map)`; empty for an all-zero map.
pub fn threshold_mask<T: Scalar>(map: &LocalizationMap<T>, tau: f64) -> Mask {
    let (h, w) = map.hw();
    let max = map.map.max_value();
    let cut = T::from_f64_lossy(tau) * max;
    Mask::new(h, w, map.map.data().iter().map(|&v| v > cut && v > T::zero()).collect())
}

struct DisjointSet {
    parent: Vec<u32>,
}

impl DisjointSet {
    fn new() -> Self {
        DisjointSet { parent: Vec::new() }
    }

    fn make(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        // smaller root wins so labels follow first-seen order
        if ra < rb {
            self.parent[rb as usize] = ra;
        } else if rb < ra {
            self.parent[ra as usize] = rb;
        }
    }
}

/// Two-pass union-find labelling with 8-connectivity. Components are ordered
/// by their first pixel in row-major order.
pub fn connected_components(mask: &Mask) -> Vec<Component> {
    let (h, w) = (mask.height, mask.width);
    const NONE: u32 = u32::MAX;
    let mut labels = vec![NONE; h * w];
    let mut sets = DisjointSet::new();
    for y in 0..h {
        for x in 0..w {
            if !mask.get(y, x) {
                continue;
            }
            // already-visited neighbours: W, NW, N, NE
            let mut neighbours = [NONE; 4];
            if x > 0 {
                neighbours[0] = labels[y * w + x - 1];
            }
            if y > 0 {
                let up = (y - 1) * w;
                if x > 0 {
                    neighbours[1] = labels[up + x - 1];
                }
                neighbours[2] = labels[up + x];
                if x + 1 < w {
                    neighbours[3] = labels[up + x + 1];
                }
            }
            let mut label = NONE;
            for &n in neighbours.iter().filter(|&&n| n != NONE) {
                if label == NONE {
                    label = n;
                } else {
                    sets.union(label, n);
                }
            }
            labels[y * w + x] = if label == NONE { sets.make() } else { label };
        }
    }

    let mut slot_of_root: Vec<u32> = vec![NONE; sets.parent.len()];
    let mut components: Vec<Component> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let l = labels[y * w + x];
            if l == NONE {
                continue;
            }
            let root = sets.find(l) as usize;
            if slot_of_root[root] == NONE {
                slot_of_root[root] = components.len() as u32;
                components.push(Component { pixels: Vec::new() });
            }
            components[slot_of_root[root] as usize].pixels.push((y, x));
        }
    }
    components
}

/// Maps map-grid cells `[lo, hi]` onto image pixels whose centres fall
/// inside them.
fn rescale_span(lo: usize, hi: usize, map_len: usize, image_len: usize) -> (usize, usize) {
    let s = image_len as f64 / map_len as f64;
    let first = (lo as f64 * s - 0.5).ceil().max(0.0) as usize;
    let last = ((hi + 1) as f64 * s - 0.5).ceil() as isize - 1;
    let last = last.max(0) as usize;
    let first = first.min(image_len - 1);
    let last = last.clamp(first, image_len - 1);
    (first, last)
}

pub fn rescale_box(b: &BoundingBox, map_hw: (usize, usize), image_w: usize, image_h: usize) -> BoundingBox {
    let (x0, x1) = rescale_span(b.x_min, b.x_max, map_hw.1, image_w);
    let (y0, y1) = rescale_span(b.y_min, b.y_max, map_hw.0, image_h);
    BoundingBox::new(x0, y0, x1, y1)
}

/// Boxes in image coordinates for the selected components of the thresholded
/// map. An empty mask gives no boxes.
pub fn boxes_from_map<T: Scalar>(
    map: &LocalizationMap<T>,
    cfg: &SegmentationConfig,
    image_w: usize,
    image_h: usize,
) -> Result<Vec<BoundingBox>> {
    cfg.validate()?;
    if image_w == 0 || image_h == 0 {
        return Err(Error::Config("image dimensions must be positive".into()));
    }
    let mask = threshold_mask(map, cfg.tau);
    let components = connected_components(&mask);
    let selected: Vec<&Component> = match cfg.mode {
        BoxMode::All => components.iter().collect(),
        BoxMode::Largest => {
            let mut best: Option<&Component> = None;
            for c in &components {
                if best.is_none_or(|b| c.len() > b.len()) {
                    best = Some(c);
                }
            }
            best.into_iter().collect()
        }
    };
    Ok(selected
        .into_iter()
        .map(|c| rescale_box(&c.bounds(), map.hw(), image_w, image_h))
        .collect())
}
