//! Domain types shared by every module.

use serde::{Deserialize, Serialize};

use crate::dct::FitConfig;
use crate::error::{Error, Result};

/// Raw depth-estimator output. Values are inverse depth: larger means closer.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, values: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::domain(format!(
                "depth map dimensions must be positive, got {width}x{height}"
            )));
        }
        if values.len() != width * height {
            return Err(Error::domain(format!(
                "depth map {width}x{height} needs {} values, got {}",
                width * height,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::domain(format!(
                "depth value {} at index {i} is not a finite non-negative number",
                values[i]
            )));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Row-major values, top-left origin.
    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.values[row * self.width + col]
    }

    /// (min, max) over all pixels.
    pub fn range(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v as f64), hi.max(v as f64))
            })
    }
}

/// Distance-proportional depth in `[0, 1]`, 1 being most distant.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedDepthMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl NormalizedDepthMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || values.len() != width * height {
            return Err(Error::domain(format!(
                "normalized map {width}x{height} has {} values",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::domain(format!("normalized depth {v} outside [0,1]")));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub(crate) fn from_clamped(width: usize, height: usize, values: Vec<f64>) -> Self {
        let values = values.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Self {
            width,
            height,
            values,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Axis-aligned pixel box `(x1, y1)`–`(x2, y2)` with `x1 < x2`, `y1 < y2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let b = BBox { x1, y1, x2, y2 };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x1, self.y1, self.x2, self.y2]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.x1 >= self.x2 || self.y1 >= self.y2 {
            return Err(Error::domain(format!(
                "invalid box ({}, {}, {}, {}): need x1 < x2 and y1 < y2",
                self.x1, self.y1, self.x2, self.y2
            )));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub image_id: String,
    pub bbox: BBox,
    pub score: f64,
    pub class_id: u32,
}

impl Detection {
    pub fn new(image_id: impl Into<String>, bbox: BBox, score: f64, class_id: u32) -> Result<Self> {
        bbox.validate()?;
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::domain(format!("score {score} outside [0,1]")));
        }
        Ok(Self {
            image_id: image_id.into(),
            bbox,
            score,
            class_id,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthBox {
    pub image_id: String,
    pub bbox: BBox,
    pub class_id: u32,
}

impl GroundTruthBox {
    pub fn new(image_id: impl Into<String>, bbox: BBox, class_id: u32) -> Result<Self> {
        bbox.validate()?;
        Ok(Self {
            image_id: image_id.into(),
            bbox,
            class_id,
        })
    }
}

/// Spline-adjusted confidence threshold for one reference threshold `tau0`.
///
/// `psi` holds one coefficient per clamped cubic basis function over
/// `knot_domain`; see [`crate::spline`] for evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCurve {
    pub tau0: f64,
    pub knot_domain: (f64, f64),
    pub psi: Vec<f64>,
    pub rho: f64,
}

impl ThresholdCurve {
    /// The no-op curve: every coefficient zero.
    pub fn flat(tau0: f64, knot_domain: (f64, f64), knots: usize, rho: f64) -> Self {
        Self {
            tau0,
            knot_domain,
            psi: vec![0.0; knots],
            rho,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.knot_domain;
        if !(0.0..=1.0).contains(&self.tau0) {
            return Err(Error::domain(format!("tau0 {} outside [0,1]", self.tau0)));
        }
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return Err(Error::domain(format!(
                "knot domain ({lo}, {hi}) must satisfy 0 <= lo < hi <= 1"
            )));
        }
        if self.psi.len() < 4 {
            return Err(Error::Config(format!(
                "a cubic curve needs at least 4 coefficients, got {}",
                self.psi.len()
            )));
        }
        if self.psi.iter().any(|p| !p.is_finite()) || !self.rho.is_finite() {
            return Err(Error::domain("curve coefficients must be finite"));
        }
        Ok(())
    }
}

/// Reference threshold → fitted curve, plus the configuration that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct LookupTable {
    entries: Vec<ThresholdCurve>,
    fit_config: FitConfig,
}

impl LookupTable {
    /// Entries are sorted by `tau0`; duplicate keys are rejected.
    pub fn new(mut entries: Vec<ThresholdCurve>, fit_config: FitConfig) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::domain("lookup table needs at least one entry"));
        }
        for e in &entries {
            e.validate()?;
        }
        entries.sort_by(|a, b| a.tau0.total_cmp(&b.tau0));
        if let Some(w) = entries.windows(2).find(|w| w[0].tau0 == w[1].tau0) {
            return Err(Error::Format(format!("duplicate tau0 key {}", w[0].tau0)));
        }
        Ok(Self {
            entries,
            fit_config,
        })
    }

    pub fn entries(&self) -> &[ThresholdCurve] {
        &self.entries
    }

    pub fn fit_config(&self) -> &FitConfig {
        &self.fit_config
    }

    pub fn keys(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.tau0).collect()
    }

    /// Exact-key lookup; no interpolation between entries.
    pub fn get(&self, tau0: f64) -> Result<&ThresholdCurve> {
        self.entries.iter().find(|e| e.tau0 == tau0).ok_or_else(|| {
            Error::Lookup(format!(
                "tau0 {tau0} not in lookup table (available: {:?})",
                self.keys()
            ))
        })
    }
}
