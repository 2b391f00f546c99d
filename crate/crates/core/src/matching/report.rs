use serde::{Deserialize, Serialize};

use super::{greedy, group_by_image, unit_bin, ImageGroup, MatchConfig};
use crate::depthnorm::DepthCatalog;
use crate::error::{Error, Result};
use crate::spline::CurveEvaluator;
use crate::types::{Detection, GroundTruthBox, LookupTable, ThresholdCurve};

/// Where the per-detection confidence threshold comes from.
#[derive(Debug, Clone, Copy)]
pub enum ThresholdSource<'a> {
    Constant(f64),
    Curve(&'a ThresholdCurve),
}

/// Counts for one normalized-depth bin `[lo, hi)` (the last bin is closed).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DepthBin {
    pub lo: f64,
    pub hi: f64,
    pub gt: usize,
    pub td: usize,
    pub ed: usize,
    pub md: usize,
}

/// Matched-detection fraction per (score bin, depth bin) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchRateGrid {
    pub score_bins: usize,
    pub depth_bins: usize,
    /// Row-major `[score_bin][depth_bin]`.
    pub matched: Vec<usize>,
    pub total: Vec<usize>,
}

impl MatchRateGrid {
    pub fn new(score_bins: usize, depth_bins: usize) -> Self {
        Self {
            score_bins,
            depth_bins,
            matched: vec![0; score_bins * depth_bins],
            total: vec![0; score_bins * depth_bins],
        }
    }

    fn add(&mut self, score: f64, depth: f64, matched: bool) {
        let cell =
            unit_bin(score, self.score_bins) * self.depth_bins + unit_bin(depth, self.depth_bins);
        self.total[cell] += 1;
        self.matched[cell] += usize::from(matched);
    }

    /// Match rate of a cell, `None` when the cell holds no detections.
    pub fn value(&self, score_bin: usize, depth_bin: usize) -> Option<f64> {
        let cell = score_bin * self.depth_bins + depth_bin;
        (self.total[cell] > 0).then(|| self.matched[cell] as f64 / self.total[cell] as f64)
    }

    /// `score_bin,depth_bin,value,count`; empty cells leave `value` blank.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("score_bin,depth_bin,value,count\n");
        for s in 0..self.score_bins {
            for d in 0..self.depth_bins {
                let v = self.value(s, d).map(|v| v.to_string()).unwrap_or_default();
                let n = self.total[s * self.depth_bins + d];
                out.push_str(&format!("{s},{d},{v},{n}\n"));
            }
        }
        out
    }
}

/// Global detection / ground-truth indices of one TD pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MatchedPair {
    pub det: usize,
    pub gt: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub td: usize,
    pub ed: usize,
    /// Ground truth not matched by any detection scoring at least the MD floor.
    pub md: usize,
    pub gt_total: usize,
    /// Detections kept by the threshold source (`td + ed`).
    pub retained: usize,
    /// Ground truth not matched by the retained detections (`gt_total - td`).
    pub unmatched_gt: usize,
    pub depth_bins: Vec<DepthBin>,
    /// Objects in images without a depth map, left out of the histograms.
    pub unbinned: usize,
    /// Match rate of retained detections per (score, depth) cell.
    pub grid: MatchRateGrid,
    pub pairs: Vec<MatchedPair>,
}

impl MatchReport {
    /// `lo,hi,gt,td,ed,md` per depth bin.
    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("lo,hi,gt,td,ed,md\n");
        for b in &self.depth_bins {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                b.lo, b.hi, b.gt, b.td, b.ed, b.md
            ));
        }
        out
    }
}

fn empty_bins(n: usize) -> Vec<DepthBin> {
    (0..n)
        .map(|i| DepthBin {
            lo: i as f64 / n as f64,
            hi: (i + 1) as f64 / n as f64,
            ..DepthBin::default()
        })
        .collect()
}

/// Filters one image's detections; returns kept global indices.
fn retain(
    image: &str,
    group: &ImageGroup,
    dets: &[Detection],
    catalog: &DepthCatalog,
    source: &ThresholdSource<'_>,
    curve: Option<&CurveEvaluator<'_>>,
) -> Result<Vec<usize>> {
    match (source, curve) {
        (ThresholdSource::Constant(tau), _) => Ok(group
            .dets
            .iter()
            .copied()
            .filter(|&i| dets[i].score >= *tau)
            .collect()),
        (ThresholdSource::Curve(_), Some(eval)) => {
            if group.dets.is_empty() {
                return Ok(Vec::new());
            }
            let index = catalog.get(image)?;
            let mut kept = Vec::new();
            for &i in &group.dets {
                let d = index.box_depth(&dets[i].bbox)?;
                if dets[i].score >= eval.threshold_at(d) {
                    kept.push(i);
                }
            }
            Ok(kept)
        }
        (ThresholdSource::Curve(_), None) => unreachable!("curve evaluator is built up front"),
    }
}

/// Filters detections by `source`, matches the survivors and tallies
/// TD / ED / MD overall and per depth bin.
pub fn count_report(
    dets: &[Detection],
    gts: &[GroundTruthBox],
    catalog: &DepthCatalog,
    cfg: &MatchConfig,
    source: ThresholdSource<'_>,
) -> Result<MatchReport> {
    cfg.validate()?;
    let evaluator = match source {
        ThresholdSource::Curve(c) => Some(CurveEvaluator::new(c)?),
        ThresholdSource::Constant(_) => None,
    };
    let mut report = MatchReport {
        td: 0,
        ed: 0,
        md: 0,
        gt_total: gts.len(),
        retained: 0,
        unmatched_gt: 0,
        depth_bins: empty_bins(cfg.depth_bins),
        unbinned: 0,
        grid: MatchRateGrid::new(cfg.score_bins, cfg.depth_bins),
        pairs: Vec::new(),
    };

    for (image, group) in group_by_image(dets, gts) {
        let kept = retain(image, &group, dets, catalog, &source, evaluator.as_ref())?;
        let kept_refs: Vec<&Detection> = kept.iter().map(|&i| &dets[i]).collect();
        let gt_refs: Vec<&GroundTruthBox> = group.gts.iter().map(|&j| &gts[j]).collect();
        let m = greedy(&kept_refs, &gt_refs, cfg);

        let floor: Vec<&Detection> = group
            .dets
            .iter()
            .map(|&i| &dets[i])
            .filter(|d| d.score >= cfg.md_score_floor)
            .collect();
        let floor_match = greedy(&floor, &gt_refs, cfg);

        report.td += m.td();
        report.ed += m.ed();
        report.md += floor_match.unmatched_gt();
        report.retained += kept.len();
        for (k, mg) in m.det_to_gt.iter().enumerate() {
            if let Some(j) = mg {
                report.pairs.push(MatchedPair {
                    det: kept[k],
                    gt: group.gts[*j],
                });
            }
        }

        let Ok(index) = catalog.get(image) else {
            report.unbinned += kept.len() + group.gts.len();
            continue;
        };
        let n = cfg.depth_bins;
        for (k, mg) in m.det_to_gt.iter().enumerate() {
            let d = index.box_depth(&kept_refs[k].bbox)?;
            let bin = &mut report.depth_bins[unit_bin(d, n)];
            if mg.is_some() {
                bin.td += 1;
            } else {
                bin.ed += 1;
            }
            report.grid.add(kept_refs[k].score, d, mg.is_some());
        }
        for (j, g) in gt_refs.iter().enumerate() {
            let d = index.box_depth(&g.bbox)?;
            let bin = &mut report.depth_bins[unit_bin(d, n)];
            bin.gt += 1;
            if floor_match.gt_to_det[j].is_none() {
                bin.md += 1;
            }
        }
    }
    report.unmatched_gt = report.gt_total - report.td;
    report.pairs.sort();
    Ok(report)
}

/// Match rate of all given detections per (score, depth) cell.
pub fn match_rate_grid(
    dets: &[Detection],
    gts: &[GroundTruthBox],
    catalog: &DepthCatalog,
    score_bins: usize,
    depth_bins: usize,
    cfg: &MatchConfig,
) -> Result<MatchRateGrid> {
    cfg.validate()?;
    if score_bins == 0 || depth_bins == 0 {
        return Err(Error::domain("grid needs at least one bin per axis"));
    }
    let mut grid = MatchRateGrid::new(score_bins, depth_bins);
    for (image, group) in group_by_image(dets, gts) {
        if group.dets.is_empty() {
            continue;
        }
        let index = catalog.get(image)?;
        let d: Vec<&Detection> = group.dets.iter().map(|&i| &dets[i]).collect();
        let g: Vec<&GroundTruthBox> = group.gts.iter().map(|&j| &gts[j]).collect();
        let m = greedy(&d, &g, cfg);
        for (k, det) in d.iter().enumerate() {
            grid.add(
                det.score,
                index.box_depth(&det.bbox)?,
                m.det_to_gt[k].is_some(),
            );
        }
    }
    Ok(grid)
}

/// One row of a threshold sweep; starred columns use the fitted curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoRow {
    pub tau0: f64,
    pub td: usize,
    pub ed: usize,
    pub td_star: Option<usize>,
    pub ed_star: Option<usize>,
}

/// TD / ED at each reference threshold, static and (with a table) curve-based.
pub fn pareto_sweep(
    dets: &[Detection],
    gts: &[GroundTruthBox],
    catalog: &DepthCatalog,
    taus: &[f64],
    lut: Option<&LookupTable>,
    cfg: &MatchConfig,
) -> Result<Vec<ParetoRow>> {
    if taus.is_empty() {
        return Err(Error::domain("sweep needs at least one threshold"));
    }
    if taus.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::domain(format!(
            "sweep thresholds {taus:?} are not sorted"
        )));
    }
    taus.iter()
        .map(|&tau0| {
            let base = count_report(dets, gts, catalog, cfg, ThresholdSource::Constant(tau0))?;
            let star = match lut {
                Some(t) => Some(count_report(
                    dets,
                    gts,
                    catalog,
                    cfg,
                    ThresholdSource::Curve(t.get(tau0)?),
                )?),
                None => None,
            };
            Ok(ParetoRow {
                tau0,
                td: base.td,
                ed: base.ed,
                td_star: star.as_ref().map(|r| r.td),
                ed_star: star.as_ref().map(|r| r.ed),
            })
        })
        .collect()
}
