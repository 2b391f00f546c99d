use serde::{Deserialize, Serialize};

use super::{greedy, group_by_image, unit_bin, MatchConfig};
use crate::depthnorm::DepthCatalog;
use crate::error::{Error, Result};
use crate::types::{Detection, GroundTruthBox};

/// Costs of rejecting a true detection (`c_fn`) and keeping a false one (`c_fp`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub c_fn: f64,
    pub c_fp: f64,
}

impl CostModel {
    pub fn new(c_fn: f64, c_fp: f64) -> Result<Self> {
        let c = Self { c_fn, c_fp };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.c_fn) || !ok(self.c_fp) {
            return Err(Error::Config(format!(
                "costs must be positive and finite, got c_fn={} c_fp={}",
                self.c_fn, self.c_fp
            )));
        }
        Ok(())
    }
}

/// Estimated cost-optimal threshold for one depth bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinThreshold {
    pub lo: f64,
    pub hi: f64,
    pub detections: usize,
    /// `None` for a bin without detections; `Some(1.0)` when no score qualifies.
    pub tau: Option<f64>,
}

/// Smallest observed score `s` whose matched fraction `p` among detections
/// scoring at least `s` satisfies `p * c_fn >= (1 - p) * c_fp`.
pub(crate) fn bin_threshold(scored: &mut [(f64, bool)], cost: &CostModel) -> f64 {
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (mut matched, mut seen) = (0usize, 0usize);
    let mut best = 1.0;
    let mut i = 0;
    while i < scored.len() {
        let s = scored[i].0;
        while i < scored.len() && scored[i].0 == s {
            matched += usize::from(scored[i].1);
            seen += 1;
            i += 1;
        }
        let p = matched as f64 / seen as f64;
        if p * cost.c_fn >= (1.0 - p) * cost.c_fp {
            best = s;
        }
    }
    best
}

/// Matches every detection (no threshold), bins them by normalized box
/// depth and estimates the per-bin threshold.
pub fn empirical_optimal_threshold(
    dets: &[Detection],
    gts: &[GroundTruthBox],
    catalog: &DepthCatalog,
    cost: &CostModel,
    bins: usize,
    cfg: &MatchConfig,
) -> Result<Vec<BinThreshold>> {
    cost.validate()?;
    cfg.validate()?;
    if bins == 0 {
        return Err(Error::domain("need at least one depth bin"));
    }
    let mut per_bin: Vec<Vec<(f64, bool)>> = vec![Vec::new(); bins];
    for (image, group) in group_by_image(dets, gts) {
        if group.dets.is_empty() {
            continue;
        }
        let index = catalog.get(image)?;
        let d: Vec<&Detection> = group.dets.iter().map(|&i| &dets[i]).collect();
        let g: Vec<&GroundTruthBox> = group.gts.iter().map(|&j| &gts[j]).collect();
        let m = greedy(&d, &g, cfg);
        for (k, det) in d.iter().enumerate() {
            let depth = index.box_depth(&det.bbox)?;
            per_bin[unit_bin(depth, bins)].push((det.score, m.det_to_gt[k].is_some()));
        }
    }
    Ok(per_bin
        .into_iter()
        .enumerate()
        .map(|(b, mut scored)| BinThreshold {
            lo: b as f64 / bins as f64,
            hi: (b + 1) as f64 / bins as f64,
            detections: scored.len(),
            tau: (!scored.is_empty()).then(|| bin_threshold(&mut scored, cost)),
        })
        .collect())
}
