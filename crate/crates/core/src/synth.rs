//! Seeded synthetic corpora: depth maps with a vertical depth gradient plus
//! matching detections and ground truth. Used by tests, benchmarks and the
//! `synth` command.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::depthnorm::DepthCatalog;
use crate::error::{Error, Result};
use crate::io;
use crate::matching::iou;
use crate::types::{BBox, DepthMap, Detection, GroundTruthBox};

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub depth_maps: BTreeMap<String, DepthMap>,
    pub detections: Vec<Detection>,
    pub groundtruth: Vec<GroundTruthBox>,
}

impl Corpus {
    pub fn catalog(&self) -> DepthCatalog {
        DepthCatalog::from_maps(&self.depth_maps)
    }

    /// Writes `depth/<image>.dpm`, `detections.jsonl` and `groundtruth.jsonl`.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let depth = dir.join("depth");
        fs::create_dir_all(&depth).map_err(|e| Error::io(&depth, e))?;
        for (id, map) in &self.depth_maps {
            io::write_depth_map(map, depth.join(format!("{id}.dpm")))?;
        }
        io::write_detections(&self.detections, dir.join("detections.jsonl"))?;
        io::write_groundtruth(&self.groundtruth, dir.join("groundtruth.jsonl"))
    }
}

/// Image `rows x cols` whose inverse depth grows linearly with the row, so
/// row `r` has normalized depth `1 - r / (rows - 1)` in every column.
pub fn row_gradient_map(rows: usize, cols: usize) -> DepthMap {
    let values = (0..rows * cols).map(|k| (1 + k / cols) as f32).collect();
    DepthMap::new(cols, rows, values).expect("gradient map is valid")
}

/// Box spanning rows `center - half ..= center + half`, whose normalized
/// depth on a [`row_gradient_map`] is exactly that of the center row.
fn box_at(x: f64, w: f64, center_row: usize, half: usize) -> BBox {
    let y1 = (center_row - half) as f64;
    let y2 = (center_row + half) as f64;
    BBox::new(x, y1, x + w, y2).expect("non-empty box")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RealisticConfig {
    pub images: usize,
    pub width: usize,
    pub height: usize,
    pub max_objects: usize,
    pub max_false_positives: usize,
    pub seed: u64,
}

impl Default for RealisticConfig {
    fn default() -> Self {
        Self {
            images: 50,
            width: 160,
            height: 120,
            max_objects: 8,
            max_false_positives: 4,
            seed: 0,
        }
    }
}

fn clip_box(x: f64, y: f64, w: f64, h: f64, width: usize, height: usize) -> Option<BBox> {
    let x1 = x.max(0.0);
    let y1 = y.max(0.0);
    let x2 = (x + w).min(width as f64 - 1.0);
    let y2 = (y + h).min(height as f64 - 1.0);
    BBox::new(x1, y1, x2, y2).ok()
}

/// Driving-scene-like corpus: objects shrink with distance, true-positive
/// scores fall with depth, and false positives cluster near the camera.
pub fn realistic_corpus(cfg: &RealisticConfig) -> Result<Corpus> {
    if cfg.images == 0 || cfg.width < 32 || cfg.height < 32 {
        return Err(Error::Config(
            "need at least one image of at least 32x32".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, 0.08).expect("valid sd");
    let fp_noise = Normal::new(0.0, 0.15).expect("valid sd");
    let (w, h) = (cfg.width as f64, cfg.height as f64);
    let mut corpus = Corpus {
        depth_maps: BTreeMap::new(),
        detections: Vec::new(),
        groundtruth: Vec::new(),
    };
    for i in 0..cfg.images {
        let id = format!("img{i:04}");
        corpus
            .depth_maps
            .insert(id.clone(), row_gradient_map(cfg.height, cfg.width));
        let n_obj = rng.random_range(1..=cfg.max_objects.max(1));
        let mut placed: Vec<BBox> = Vec::new();
        for _ in 0..n_obj {
            for _attempt in 0..20 {
                let cy = rng.random_range(0.05..0.95) * h;
                let depth = 1.0 - cy / (h - 1.0);
                let size = 4.0 + 0.25 * h * (1.0 - depth);
                let bw = size * rng.random_range(1.0..2.0);
                let cx = rng.random_range(0.0..w);
                let Some(b) = clip_box(
                    cx - bw / 2.0,
                    cy - size / 2.0,
                    bw,
                    size,
                    cfg.width,
                    cfg.height,
                ) else {
                    continue;
                };
                if placed.iter().any(|p| iou(p, &b) > 0.05) {
                    continue;
                }
                placed.push(b);
                let class = rng.random_range(0..3u32);
                corpus
                    .groundtruth
                    .push(GroundTruthBox::new(id.clone(), b, class)?);
                if rng.random::<f64>() < 0.95 {
                    let jx = (rng.random::<f64>() - 0.5) * 0.1 * b.width();
                    let jy = (rng.random::<f64>() - 0.5) * 0.1 * b.height();
                    let db = BBox::new(b.x1 + jx, b.y1 + jy, b.x2 + jx, b.y2 + jy)?;
                    let s = (0.95 - 0.55 * depth + noise.sample(&mut rng)).clamp(0.01, 0.99);
                    corpus
                        .detections
                        .push(Detection::new(id.clone(), db, s, class)?);
                }
                break;
            }
        }
        let n_fp = rng.random_range(0..=cfg.max_false_positives);
        for _ in 0..n_fp {
            // Bias toward the bottom (near) rows.
            let cy = rng.random::<f64>().sqrt() * (h - 1.0);
            let depth = 1.0 - cy / (h - 1.0);
            let size = 4.0 + 0.25 * h * (1.0 - depth);
            let cx = rng.random_range(0.0..w);
            let Some(b) = clip_box(
                cx - size / 2.0,
                cy - size / 2.0,
                size,
                size,
                cfg.width,
                cfg.height,
            ) else {
                continue;
            };
            let s = (0.55 - 0.3 * depth + fp_noise.sample(&mut rng)).clamp(0.01, 0.99);
            let class = rng.random_range(0..3u32);
            corpus
                .detections
                .push(Detection::new(id.clone(), b, s, class)?);
        }
    }
    Ok(corpus)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantedConfig {
    pub tau0: f64,
    /// Far (depth > 0.7) matched detections scoring just below `tau0`.
    pub recoverable: usize,
    /// Near (depth < 0.35) unmatched detections scoring just below `tau0`.
    pub decoys: usize,
    /// Unmatched detections above `tau0`.
    pub static_fp: usize,
    /// Matched detections above `tau0`.
    pub static_tp: usize,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            tau0: 0.5,
            recoverable: 100,
            decoys: 50,
            static_fp: 20,
            static_tp: 50,
            seed: 0,
        }
    }
}

const PLANT_ROWS: usize = 101;
const PLANT_COLS: usize = 400;
const PLANT_PER_IMAGE: usize = 10;

/// Corpus where lowering the threshold for distant boxes only recovers
/// exactly `recoverable` true detections, while lowering it near the camera
/// only admits decoys.
pub fn planted_corpus(cfg: &PlantedConfig) -> Result<Corpus> {
    if !(0.15..=1.0).contains(&cfg.tau0) {
        return Err(Error::Config(format!(
            "planted tau0 {} must lie in [0.15, 1]",
            cfg.tau0
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut corpus = Corpus {
        depth_maps: BTreeMap::new(),
        detections: Vec::new(),
        groundtruth: Vec::new(),
    };
    // (kind, count): 0 recoverable, 1 decoy, 2 static FP, 3 static TP.
    let mut items: Vec<u8> = Vec::new();
    for (kind, n) in [cfg.recoverable, cfg.decoys, cfg.static_fp, cfg.static_tp]
        .iter()
        .enumerate()
    {
        items.extend(std::iter::repeat_n(kind as u8, *n));
    }
    let below = |rng: &mut ChaCha8Rng| cfg.tau0 - rng.random_range(0.01..0.14);
    let above = |rng: &mut ChaCha8Rng| {
        rng.random_range(cfg.tau0..=1.0f64.min(cfg.tau0 + 0.3))
            .min(1.0)
    };
    for (img, chunk) in items.chunks(PLANT_PER_IMAGE).enumerate() {
        let id = format!("plant{img:04}");
        corpus
            .depth_maps
            .insert(id.clone(), row_gradient_map(PLANT_ROWS, PLANT_COLS));
        for (slot, &kind) in chunk.iter().enumerate() {
            let x = (slot * 40) as f64 + 5.0;
            // Normalized depth of a centered box is 1 - row / 100.
            let row = match kind {
                0 => rng.random_range(5..=25),
                1 => rng.random_range(70..=90),
                _ => rng.random_range(40..=60),
            };
            let b = box_at(x, 24.0, row, 3);
            match kind {
                0 | 3 => {
                    corpus
                        .groundtruth
                        .push(GroundTruthBox::new(id.clone(), b, 0)?);
                    let s = if kind == 0 {
                        below(&mut rng)
                    } else {
                        above(&mut rng)
                    };
                    corpus.detections.push(Detection::new(id.clone(), b, s, 0)?);
                }
                _ => {
                    let s = if kind == 1 {
                        below(&mut rng)
                    } else {
                        above(&mut rng)
                    };
                    corpus.detections.push(Detection::new(id.clone(), b, s, 0)?);
                }
            }
        }
    }
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_box_depth_is_center_row() {
        let map = row_gradient_map(101, 50);
        let b = box_at(3.0, 10.0, 20, 3);
        let d = crate::depthnorm::box_depth(&map, &b).unwrap();
        assert!((d - 0.8).abs() < 1e-12);
    }

    #[test]
    fn realistic_is_seeded() {
        let cfg = RealisticConfig {
            images: 5,
            ..RealisticConfig::default()
        };
        assert_eq!(
            realistic_corpus(&cfg).unwrap(),
            realistic_corpus(&cfg).unwrap()
        );
        assert!(!realistic_corpus(&cfg).unwrap().groundtruth.is_empty());
    }

    #[test]
    fn planted_counts() {
        let c = planted_corpus(&PlantedConfig::default()).unwrap();
        assert_eq!(c.groundtruth.len(), 150);
        assert_eq!(c.detections.len(), 220);
        assert_eq!(c.depth_maps.len(), 22);
    }
}
