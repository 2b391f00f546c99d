//! Depth normalizations: batch-level min-max (loss weighting), per-image
//! min-max (stratification and thresholding), box-region mean depth, and
//! area-average rescaling to feature-level resolutions.
//!
//! Every normalization inverts the estimator's inverse-depth convention so
//! that 1 is the most distant pixel. A degenerate range (max == min) maps to
//! all zeros.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::types::{BBox, DepthMap, NormalizedDepthMap};

/// Depth maps of one training batch with their global extrema.
#[derive(Debug, Clone)]
pub struct BatchDepth {
    maps: Vec<DepthMap>,
    d_min: f64,
    d_max: f64,
}

impl BatchDepth {
    pub fn new(maps: Vec<DepthMap>) -> Result<Self> {
        if maps.is_empty() {
            return Err(Error::domain(
                "batch normalization needs at least one depth map",
            ));
        }
        let (d_min, d_max) = maps
            .iter()
            .map(DepthMap::range)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (a, b)| {
                (lo.min(a), hi.max(b))
            });
        Ok(Self { maps, d_min, d_max })
    }

    pub fn maps(&self) -> &[DepthMap] {
        &self.maps
    }

    pub fn d_min(&self) -> f64 {
        self.d_min
    }

    pub fn d_max(&self) -> f64 {
        self.d_max
    }
}

/// `1 - (raw - lo) / (hi - lo)`, or 0 when `hi == lo`.
#[inline]
pub fn invert_normalized(raw: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        (1.0 - (raw - lo) / (hi - lo)).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

fn normalize_with(map: &DepthMap, lo: f64, hi: f64) -> NormalizedDepthMap {
    let values = map
        .values()
        .iter()
        .map(|&v| invert_normalized(v as f64, lo, hi))
        .collect();
    NormalizedDepthMap::from_clamped(map.width(), map.height(), values)
}

/// Batch-global min-max normalization followed by inversion.
pub fn normalize_batch(batch: &BatchDepth) -> Vec<NormalizedDepthMap> {
    batch
        .maps
        .iter()
        .map(|m| normalize_with(m, batch.d_min, batch.d_max))
        .collect()
}

/// Per-image min-max normalization followed by inversion.
pub fn normalize_image(map: &DepthMap) -> NormalizedDepthMap {
    let (lo, hi) = map.range();
    normalize_with(map, lo, hi)
}

/// Inclusive integer pixel span `[lo, hi]` covered by the continuous
/// interval `[a, b]`, clamped to `[0, len - 1]`.
///
/// Pixels `p` with `a <= p <= b` are members. An interval that contains no
/// integer (a box thinner than one pixel) falls back to the pixel holding
/// its midpoint.
fn pixel_span(a: f64, b: f64, len: usize) -> Option<(usize, usize)> {
    let (mut lo, mut hi) = (a.ceil(), b.floor());
    if lo > hi {
        lo = ((a + b) / 2.0).floor();
        hi = lo;
    }
    let lo = lo.max(0.0);
    let hi = hi.min(len as f64 - 1.0);
    (lo <= hi).then_some((lo as usize, hi as usize))
}

/// Summed-area table over one depth map, for O(1) box means.
#[derive(Debug, Clone)]
pub struct DepthIndex {
    width: usize,
    height: usize,
    min: f64,
    max: f64,
    integral: Vec<f64>,
}

impl DepthIndex {
    pub fn new(map: &DepthMap) -> Self {
        let (w, h) = (map.width(), map.height());
        let stride = w + 1;
        let mut integral = vec![0.0; stride * (h + 1)];
        for r in 0..h {
            let mut row_sum = 0.0;
            for c in 0..w {
                row_sum += map.get(r, c) as f64;
                integral[(r + 1) * stride + c + 1] = integral[r * stride + c + 1] + row_sum;
            }
        }
        let (min, max) = map.range();
        Self {
            width: w,
            height: h,
            min,
            max,
            integral,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn range(&self) -> (f64, f64) {
        (self.min, self.max)
    }

    /// Mean raw depth over the pixels of `bbox`.
    pub fn raw_box_mean(&self, bbox: &BBox) -> Result<f64> {
        let outside = || {
            Error::domain(format!(
                "box ({}, {}, {}, {}) lies outside the {}x{} image",
                bbox.x1, bbox.y1, bbox.x2, bbox.y2, self.width, self.height
            ))
        };
        let (c0, c1) = pixel_span(bbox.x1, bbox.x2, self.width).ok_or_else(outside)?;
        let (r0, r1) = pixel_span(bbox.y1, bbox.y2, self.height).ok_or_else(outside)?;
        let s = self.width + 1;
        let sum = self.integral[(r1 + 1) * s + c1 + 1]
            - self.integral[r0 * s + c1 + 1]
            - self.integral[(r1 + 1) * s + c0]
            + self.integral[r0 * s + c0];
        let n = ((r1 - r0 + 1) * (c1 - c0 + 1)) as f64;
        Ok(sum / n)
    }

    /// Per-image normalized, inverted box depth in `[0, 1]`.
    pub fn box_depth(&self, bbox: &BBox) -> Result<f64> {
        let mean = self.raw_box_mean(bbox)?;
        Ok(invert_normalized(mean, self.min, self.max))
    }
}

/// Normalized depth of the pixel region inside `bbox`; see [`DepthIndex`].
pub fn box_depth(map: &DepthMap, bbox: &BBox) -> Result<f64> {
    DepthIndex::new(map).box_depth(bbox)
}

/// Depth indexes keyed by image id.
#[derive(Debug, Clone, Default)]
pub struct DepthCatalog {
    indexes: BTreeMap<String, DepthIndex>,
}

impl DepthCatalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_maps<'a>(maps: impl IntoIterator<Item = (&'a String, &'a DepthMap)>) -> Self {
        let indexes = maps
            .into_iter()
            .map(|(k, m)| (k.clone(), DepthIndex::new(m)))
            .collect();
        Self { indexes }
    }

    pub fn insert(&mut self, image_id: impl Into<String>, map: &DepthMap) {
        self.indexes.insert(image_id.into(), DepthIndex::new(map));
    }

    pub fn contains(&self, image_id: &str) -> bool {
        self.indexes.contains_key(image_id)
    }

    pub fn len(&self) -> usize {
        self.indexes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indexes.is_empty()
    }

    pub fn get(&self, image_id: &str) -> Result<&DepthIndex> {
        self.indexes
            .get(image_id)
            .ok_or_else(|| Error::Lookup(format!("no depth map for image {image_id:?}")))
    }

    pub fn box_depth(&self, image_id: &str, bbox: &BBox) -> Result<f64> {
        self.get(image_id)?.box_depth(bbox)
    }
}

/// Source cells overlapping each target cell along one axis, with overlap
/// lengths.
fn axis_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|j| {
            let a = j as f64 * scale;
            let b = (j + 1) as f64 * scale;
            let first = a.floor() as usize;
            let last = (b.ceil() as usize).min(src);
            (first..last)
                .filter_map(|c| {
                    let overlap = (b.min(c as f64 + 1.0) - a.max(c as f64)).max(0.0);
                    (overlap > 0.0).then_some((c, overlap / scale))
                })
                .collect()
        })
        .collect()
}

/// Area-average pooling to `out_h × out_w`.
pub fn downsample_to_level(
    map: &NormalizedDepthMap,
    out_h: usize,
    out_w: usize,
) -> Result<NormalizedDepthMap> {
    let (h, w) = (map.height(), map.width());
    if !(1..=h).contains(&out_h) || !(1..=w).contains(&out_w) {
        return Err(Error::domain(format!(
            "level size {out_h}x{out_w} must lie within 1x1..={h}x{w}"
        )));
    }
    if out_h == h && out_w == w {
        return Ok(map.clone());
    }
    let cols = axis_weights(w, out_w);
    let rows = axis_weights(h, out_h);

    // Horizontal pass: h × out_w.
    let mut tmp = vec![0.0; h * out_w];
    for r in 0..h {
        let src = &map.values()[r * w..(r + 1) * w];
        for (j, ws) in cols.iter().enumerate() {
            tmp[r * out_w + j] = ws.iter().map(|&(c, wt)| src[c] * wt).sum();
        }
    }
    let mut out = vec![0.0; out_h * out_w];
    for (i, ws) in rows.iter().enumerate() {
        for j in 0..out_w {
            out[i * out_w + j] = ws.iter().map(|&(r, wt)| tmp[r * out_w + j] * wt).sum();
        }
    }
    Ok(NormalizedDepthMap::from_clamped(out_w, out_h, out))
}
