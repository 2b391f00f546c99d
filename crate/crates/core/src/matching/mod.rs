//! Detection-to-ground-truth matching and everything built on it: TD/ED/MD
//! accounting, depth-binned histograms, match-rate grids, threshold sweeps,
//! COCO-style metrics and the empirical cost-optimal threshold.
//!
//! Terminology: a *true detection* (TD) is a retained detection matched to a
//! ground-truth box, an *extra detection* (ED) is a retained detection left
//! unmatched, and a *missing detection* (MD) is a ground-truth box that no
//! detection scoring at least `md_score_floor` matches.

mod coco;
mod optimal;
mod report;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{BBox, Detection, GroundTruthBox};

pub use coco::{coco_map, CocoMetrics};
pub use optimal::{empirical_optimal_threshold, BinThreshold, CostModel};
pub use report::{
    count_report, match_rate_grid, pareto_sweep, DepthBin, MatchRateGrid, MatchReport, MatchedPair,
    ParetoRow, ThresholdSource,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    pub iou_threshold: f64,
    pub class_aware: bool,
    pub md_score_floor: f64,
    /// Uniform bins over normalized depth `[0, 1]` for histograms and grids.
    pub depth_bins: usize,
    /// Uniform bins over score `[0, 1]` for match-rate grids.
    pub score_bins: usize,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            iou_threshold: 0.5,
            class_aware: true,
            md_score_floor: 0.1,
            depth_bins: 10,
            score_bins: 10,
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return Err(Error::Config(format!(
                "IoU threshold {} outside (0,1]",
                self.iou_threshold
            )));
        }
        if self.depth_bins == 0 || self.score_bins == 0 {
            return Err(Error::Config("bin counts must be at least 1".into()));
        }
        Ok(())
    }
}

/// Intersection over union on continuous coordinates.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let ih = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = iw * ih;
    if inter <= 0.0 {
        return 0.0;
    }
    inter / (a.area() + b.area() - inter)
}

/// Result of matching one image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageMatch {
    /// For each detection (input order): the matched ground-truth index.
    pub det_to_gt: Vec<Option<usize>>,
    /// For each ground-truth box (input order): the matched detection index.
    pub gt_to_det: Vec<Option<usize>>,
}

impl ImageMatch {
    pub fn td(&self) -> usize {
        self.det_to_gt.iter().filter(|m| m.is_some()).count()
    }

    pub fn ed(&self) -> usize {
        self.det_to_gt.len() - self.td()
    }

    /// Ground-truth boxes left unmatched.
    pub fn unmatched_gt(&self) -> usize {
        self.gt_to_det.iter().filter(|m| m.is_none()).count()
    }
}

/// Candidate ground-truth indices for one detection, best IoU first (ties by
/// lower index), restricted to IoU >= threshold and, if class-aware, the
/// same class.
pub(crate) fn candidates(
    det: &Detection,
    gts: &[&GroundTruthBox],
    cfg: &MatchConfig,
) -> Vec<usize> {
    let mut c: Vec<(usize, f64)> = gts
        .iter()
        .enumerate()
        .filter(|(_, g)| !cfg.class_aware || g.class_id == det.class_id)
        .map(|(j, g)| (j, iou(&det.bbox, &g.bbox)))
        .filter(|&(_, v)| v >= cfg.iou_threshold)
        .collect();
    c.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    c.into_iter().map(|(j, _)| j).collect()
}

/// Detection indices by descending score, ties by input order.
pub(crate) fn score_order(dets: &[&Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));
    order
}

/// Greedy matcher without image-id checks.
pub(crate) fn greedy(
    dets: &[&Detection],
    gts: &[&GroundTruthBox],
    cfg: &MatchConfig,
) -> ImageMatch {
    let mut det_to_gt = vec![None; dets.len()];
    let mut gt_to_det = vec![None; gts.len()];
    for i in score_order(dets) {
        if let Some(j) = candidates(dets[i], gts, cfg)
            .into_iter()
            .find(|&j| gt_to_det[j].is_none())
        {
            det_to_gt[i] = Some(j);
            gt_to_det[j] = Some(i);
        }
    }
    ImageMatch {
        det_to_gt,
        gt_to_det,
    }
}

/// Greedy one-to-one matching within one image: detections in descending
/// score order each claim the unmatched eligible ground truth with the
/// highest IoU.
pub fn match_image(
    dets: &[Detection],
    gts: &[GroundTruthBox],
    cfg: &MatchConfig,
) -> Result<ImageMatch> {
    cfg.validate()?;
    let first = dets
        .first()
        .map(|d| &d.image_id)
        .or_else(|| gts.first().map(|g| &g.image_id));
    if let Some(id) = first {
        let mixed = dets.iter().any(|d| &d.image_id != id) || gts.iter().any(|g| &g.image_id != id);
        if mixed {
            return Err(Error::domain(
                "match_image called with records from several images",
            ));
        }
    }
    let d: Vec<&Detection> = dets.iter().collect();
    let g: Vec<&GroundTruthBox> = gts.iter().collect();
    Ok(greedy(&d, &g, cfg))
}

/// Global indices of detections and ground truth per image, in image-id order.
#[derive(Debug, Default)]
pub(crate) struct ImageGroup {
    pub dets: Vec<usize>,
    pub gts: Vec<usize>,
}

pub(crate) fn group_by_image<'a>(
    dets: &'a [Detection],
    gts: &'a [GroundTruthBox],
) -> BTreeMap<&'a str, ImageGroup> {
    let mut groups: BTreeMap<&str, ImageGroup> = BTreeMap::new();
    for (i, d) in dets.iter().enumerate() {
        groups.entry(d.image_id.as_str()).or_default().dets.push(i);
    }
    for (j, g) in gts.iter().enumerate() {
        groups.entry(g.image_id.as_str()).or_default().gts.push(j);
    }
    groups
}

/// Bin index of `v` in `[0, 1]` split into `n` uniform bins.
pub(crate) fn unit_bin(v: f64, n: usize) -> usize {
    ((v.clamp(0.0, 1.0) * n as f64) as usize).min(n - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    fn det(x1: f64, y1: f64, x2: f64, y2: f64, s: f64, c: u32) -> Detection {
        Detection::new("img", bx(x1, y1, x2, y2), s, c).unwrap()
    }

    fn gt(x1: f64, y1: f64, x2: f64, y2: f64, c: u32) -> GroundTruthBox {
        GroundTruthBox::new("img", bx(x1, y1, x2, y2), c).unwrap()
    }

    #[test]
    fn iou_examples() {
        let a = bx(0.0, 0.0, 2.0, 2.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &bx(5.0, 5.0, 6.0, 6.0)), 0.0);
        assert!((iou(&a, &bx(1.0, 1.0, 3.0, 3.0)) - 1.0 / 7.0).abs() < 1e-15);
        // Touching edges have zero intersection.
        assert_eq!(iou(&a, &bx(2.0, 0.0, 3.0, 2.0)), 0.0);
    }

    #[test]
    fn single_exact_match() {
        let m = match_image(
            &[det(0.0, 0.0, 10.0, 10.0, 0.9, 0)],
            &[gt(0.0, 0.0, 10.0, 10.0, 0)],
            &MatchConfig::default(),
        )
        .unwrap();
        assert_eq!((m.td(), m.ed(), m.unmatched_gt()), (1, 0, 0));
    }

    #[test]
    fn detection_without_ground_truth() {
        let m = match_image(
            &[det(0.0, 0.0, 10.0, 10.0, 0.9, 0)],
            &[],
            &MatchConfig::default(),
        )
        .unwrap();
        assert_eq!((m.td(), m.ed()), (0, 1));
    }

    #[test]
    fn class_awareness() {
        let d = [det(0.0, 0.0, 10.0, 10.0, 0.9, 1)];
        let g = [gt(0.0, 0.0, 10.0, 10.0, 0)];
        let aware = match_image(&d, &g, &MatchConfig::default()).unwrap();
        assert_eq!(aware.td(), 0);
        let cfg = MatchConfig {
            class_aware: false,
            ..MatchConfig::default()
        };
        assert_eq!(match_image(&d, &g, &cfg).unwrap().td(), 1);
    }

    #[test]
    fn higher_score_claims_first() {
        let d = [
            det(0.0, 0.0, 10.0, 10.0, 0.3, 0),
            det(1.0, 0.0, 11.0, 10.0, 0.8, 0),
        ];
        let g = [gt(0.0, 0.0, 10.0, 10.0, 0)];
        let m = match_image(&d, &g, &MatchConfig::default()).unwrap();
        assert_eq!(m.det_to_gt, vec![None, Some(0)]);
    }

    #[test]
    fn mixed_images_rejected() {
        let mut other = det(0.0, 0.0, 1.0, 1.0, 0.5, 0);
        other.image_id = "other".into();
        let r = match_image(
            &[det(0.0, 0.0, 1.0, 1.0, 0.5, 0), other],
            &[],
            &MatchConfig::default(),
        );
        assert!(matches!(r, Err(Error::Domain(_))));
    }

    #[test]
    fn greedy_is_not_optimal_on_adversarial_overlap() {
        // The top detection overlaps both boxes and prefers the one the
        // second detection needs, so greedy matches 1 where 2 is possible.
        let g = [gt(0.0, 0.0, 10.0, 10.0, 0), gt(4.0, 0.0, 14.0, 10.0, 0)];
        let d = [
            det(3.0, 0.0, 13.0, 10.0, 0.9, 0),
            det(-2.0, 0.0, 8.0, 10.0, 0.5, 0),
        ];
        let cfg = MatchConfig {
            iou_threshold: 0.4,
            ..MatchConfig::default()
        };
        assert!(iou(&d[0].bbox, &g[1].bbox) > iou(&d[0].bbox, &g[0].bbox));
        assert!(iou(&d[0].bbox, &g[0].bbox) >= 0.4);
        assert!(iou(&d[1].bbox, &g[0].bbox) >= 0.4);
        assert!(iou(&d[1].bbox, &g[1].bbox) < 0.4);
        let m = match_image(&d, &g, &cfg).unwrap();
        assert_eq!(m.td(), 2, "second detection still finds gt 0");
        // Now make the top detection prefer gt 0, which the second one needs.
        let d2 = [
            det(1.0, 0.0, 11.0, 10.0, 0.9, 0),
            det(-2.0, 0.0, 8.0, 10.0, 0.5, 0),
        ];
        let g2 = [gt(0.0, 0.0, 10.0, 10.0, 0), gt(3.0, 0.0, 13.0, 10.0, 0)];
        assert!(iou(&d2[0].bbox, &g2[1].bbox) >= 0.4);
        let m2 = match_image(&d2, &g2, &cfg).unwrap();
        assert_eq!(m2.td(), 1);
        // An optimal assignment would pair d0-g1 and d1-g0.
    }
}
