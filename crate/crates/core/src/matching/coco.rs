//! COCO-style box evaluation, following the reference evaluator's matching,
//! ignore handling and 101-point interpolated precision.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::iou;
use crate::error::{Error, Result};
use crate::types::{BBox, Detection, GroundTruthBox};

const MAX_DETS: usize = 100;
const AREA_RANGES: [(f64, f64); 4] = [
    (0.0, 1e10),
    (0.0, 32.0 * 32.0),
    (32.0 * 32.0, 96.0 * 96.0),
    (96.0 * 96.0, 1e10),
];

/// Summary metrics; `None` where no ground truth falls in the area range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoMetrics {
    pub map: Option<f64>,
    pub map50: Option<f64>,
    pub map75: Option<f64>,
    pub map_s: Option<f64>,
    pub map_m: Option<f64>,
    pub map_l: Option<f64>,
    pub mar: Option<f64>,
    pub mar_s: Option<f64>,
    pub mar_m: Option<f64>,
    pub mar_l: Option<f64>,
}

fn linspace(start: f64, stop: f64, num: usize) -> Vec<f64> {
    let step = (stop - start) / (num - 1) as f64;
    let mut v: Vec<f64> = (0..num).map(|i| start + i as f64 * step).collect();
    v[num - 1] = stop;
    v
}

fn iou_thresholds() -> Vec<f64> {
    linspace(0.5, 0.95, 10)
}

fn recall_thresholds() -> Vec<f64> {
    linspace(0.0, 1.0, 101)
}

struct EvalImage {
    scores: Vec<f64>,
    /// `[threshold][detection]`
    matched: Vec<Vec<bool>>,
    ignored: Vec<Vec<bool>>,
    gt_ignored: Vec<bool>,
}

fn outside(area: f64, range: (f64, f64)) -> bool {
    area < range.0 || area > range.1
}

fn evaluate_image(
    dets: &[(&BBox, f64)],
    gts: &[&BBox],
    range: (f64, f64),
    thresholds: &[f64],
) -> Option<EvalImage> {
    if dets.is_empty() && gts.is_empty() {
        return None;
    }
    let gt_ignore_raw: Vec<bool> = gts.iter().map(|g| outside(g.area(), range)).collect();
    let mut gt_order: Vec<usize> = (0..gts.len()).collect();
    gt_order.sort_by_key(|&j| gt_ignore_raw[j]);
    let gt_ignored: Vec<bool> = gt_order.iter().map(|&j| gt_ignore_raw[j]).collect();

    let mut dt_order: Vec<usize> = (0..dets.len()).collect();
    dt_order.sort_by(|&a, &b| dets[b].1.total_cmp(&dets[a].1));
    dt_order.truncate(MAX_DETS);

    let ious: Vec<Vec<f64>> = dt_order
        .iter()
        .map(|&i| gt_order.iter().map(|&j| iou(dets[i].0, gts[j])).collect())
        .collect();

    let t = thresholds.len();
    let nd = dt_order.len();
    let ng = gt_order.len();
    let mut matched = vec![vec![false; nd]; t];
    let mut ignored = vec![vec![false; nd]; t];
    for (ti, &thr) in thresholds.iter().enumerate() {
        let mut gt_taken = vec![false; ng];
        for d in 0..nd {
            let mut best = thr.min(1.0 - 1e-10);
            let mut m: Option<usize> = None;
            for g in 0..ng {
                if gt_taken[g] {
                    continue;
                }
                if let Some(mm) = m {
                    if !gt_ignored[mm] && gt_ignored[g] {
                        break;
                    }
                }
                if ious[d][g] < best {
                    continue;
                }
                best = ious[d][g];
                m = Some(g);
            }
            if let Some(g) = m {
                ignored[ti][d] = gt_ignored[g];
                matched[ti][d] = true;
                gt_taken[g] = true;
            }
        }
        for d in 0..nd {
            if !matched[ti][d] && outside(dets[dt_order[d]].0.area(), range) {
                ignored[ti][d] = true;
            }
        }
    }
    Some(EvalImage {
        scores: dt_order.iter().map(|&i| dets[i].1).collect(),
        matched,
        ignored,
        gt_ignored,
    })
}

/// Per-threshold precision vectors and recalls for one (category, area)
/// cell, or `None` when the cell has no non-ignored ground truth.
fn accumulate(
    evals: &[EvalImage],
    t: usize,
    rec_thrs: &[f64],
) -> Option<(Vec<Vec<f64>>, Vec<f64>)> {
    let npig = evals
        .iter()
        .flat_map(|e| e.gt_ignored.iter())
        .filter(|&&ig| !ig)
        .count();
    if npig == 0 {
        return None;
    }
    let mut flat: Vec<(usize, usize)> = Vec::new();
    for (ei, e) in evals.iter().enumerate() {
        flat.extend((0..e.scores.len()).map(|d| (ei, d)));
    }
    flat.sort_by(|a, b| evals[b.0].scores[b.1].total_cmp(&evals[a.0].scores[a.1]));

    let mut precisions = Vec::with_capacity(t);
    let mut recalls = Vec::with_capacity(t);
    for ti in 0..t {
        let (mut tp, mut fp) = (0.0f64, 0.0f64);
        let mut rc = Vec::new();
        let mut pr = Vec::new();
        for &(ei, d) in &flat {
            let e = &evals[ei];
            if e.ignored[ti][d] {
                continue;
            }
            if e.matched[ti][d] {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            rc.push(tp / npig as f64);
            pr.push(tp / (fp + tp + f64::EPSILON));
        }
        recalls.push(rc.last().copied().unwrap_or(0.0));
        for i in (1..pr.len()).rev() {
            if pr[i] > pr[i - 1] {
                pr[i - 1] = pr[i];
            }
        }
        let q: Vec<f64> = rec_thrs
            .iter()
            .map(|&r| {
                let idx = rc.partition_point(|&x| x < r);
                pr.get(idx).copied().unwrap_or(0.0)
            })
            .collect();
        precisions.push(q);
    }
    Some((precisions, recalls))
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

/// Scored detections and ground truth of one (class, image) cell.
type Cell<'a> = (Vec<(&'a BBox, f64)>, Vec<&'a BBox>);
/// Per category: precision at `[iou][recall]` and recall per IoU threshold.
type AreaResult = (Vec<Vec<f64>>, Vec<f64>);

/// mAP over IoU 0.50:0.95, mAP50, mAP75, size-binned mAP and mAR at 100
/// detections per image. Categories are the ground-truth classes; images
/// are the union of ids seen in either list.
pub fn coco_map(dets: &[Detection], gts: &[GroundTruthBox]) -> Result<CocoMetrics> {
    if gts.is_empty() {
        return Err(Error::domain(
            "COCO evaluation needs at least one ground-truth box",
        ));
    }
    let categories: BTreeSet<u32> = gts.iter().map(|g| g.class_id).collect();
    let mut cells: BTreeMap<(u32, &str), Cell> = BTreeMap::new();
    for g in gts {
        cells
            .entry((g.class_id, &g.image_id))
            .or_default()
            .1
            .push(&g.bbox);
    }
    for d in dets.iter().filter(|d| categories.contains(&d.class_id)) {
        cells
            .entry((d.class_id, &d.image_id))
            .or_default()
            .0
            .push((&d.bbox, d.score));
    }

    let iou_thrs = iou_thresholds();
    let rec_thrs = recall_thresholds();
    let t = iou_thrs.len();
    let mut results: Vec<Vec<AreaResult>> = vec![Vec::new(); AREA_RANGES.len()];
    for &cat in &categories {
        for (ai, &range) in AREA_RANGES.iter().enumerate() {
            let evals: Vec<EvalImage> = cells
                .range((cat, "")..)
                .take_while(|((c, _), _)| *c == cat)
                .filter_map(|(_, (d, g))| evaluate_image(d, g, range, &iou_thrs))
                .collect();
            if let Some(r) = accumulate(&evals, t, &rec_thrs) {
                results[ai].push(r);
            }
        }
    }

    let ap = |ai: usize, thr: Option<usize>| {
        mean(results[ai].iter().flat_map(move |(p, _)| {
            p.iter()
                .enumerate()
                .filter(move |(ti, _)| thr.is_none_or(|x| x == *ti))
                .flat_map(|(_, q)| q.iter().copied())
        }))
    };
    let ar = |ai: usize| mean(results[ai].iter().flat_map(|(_, r)| r.iter().copied()));
    Ok(CocoMetrics {
        map: ap(0, None),
        map50: ap(0, Some(0)),
        map75: ap(0, Some(5)),
        map_s: ap(1, None),
        map_m: ap(2, None),
        map_l: ap(3, None),
        mar: ar(0),
        mar_s: ar(1),
        mar_m: ar(2),
        mar_l: ar(3),
    })
}
