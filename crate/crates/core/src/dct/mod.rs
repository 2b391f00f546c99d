//! Depth-aware confidence thresholding: fitting one spline threshold curve
//! per reference threshold and applying the resulting lookup table.
//!
//! For reference threshold `tau0` and coefficients `psi`, a detection with
//! score `s` and normalized box depth `d` is kept iff
//! `s >= clip(tau0 - sum_m psi_m B_m(d), 0, 1)`. The fit maximizes
//!
//! ```text
//! M(psi) = TP(psi) - gamma * max(0, FP(psi) - FP_static * (1 + epsilon))
//! ```
//!
//! where `FP_static` counts extra detections at the constant threshold.

mod optimizer;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use optimizer::{
    BoxOptimizer, DifferentialEvolution, GenerationRecord, OptimizeResult, OptimizerConfig, Scored,
};

use crate::depthnorm::DepthCatalog;
use crate::error::{Error, Result};
use crate::matching::{candidates, group_by_image, MatchConfig};
use crate::spline::{dot4, BasisSpec, CurveEvaluator};
use crate::types::{Detection, GroundTruthBox, LookupTable, ThresholdCurve};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ObjectiveVariant {
    /// `TP - penalty`.
    #[default]
    Base,
    /// `dTD - dED + TD*/ED* - penalty`.
    AbsRatio,
    /// `dTD - dED + (TD*/ED* - TD/ED) - penalty`.
    RelRatio,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BoundsMode {
    /// `psi_m in [0, tau0 - rho]`: thresholds only drop, never below `rho`.
    #[default]
    Safe,
    /// `psi_m in [rho, 1]`.
    Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub taus: Vec<f64>,
    /// Number of spline coefficients `J`.
    pub knots: usize,
    pub domain: (f64, f64),
    pub epsilon: f64,
    pub gamma: f64,
    pub rho: f64,
    pub objective: ObjectiveVariant,
    pub optimizer: OptimizerConfig,
    pub coeff_bounds: BoundsMode,
    pub matching: MatchConfig,
}

/// `0.1, 0.2, ..., 0.9`.
pub fn default_taus() -> Vec<f64> {
    (1..=9).map(|i| i as f64 / 10.0).collect()
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            taus: default_taus(),
            knots: 10,
            domain: (0.0, 0.9),
            epsilon: 0.1,
            gamma: 1000.0,
            rho: 0.1,
            objective: ObjectiveVariant::Base,
            optimizer: OptimizerConfig::default(),
            coeff_bounds: BoundsMode::Safe,
            matching: MatchConfig::default(),
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.taus.is_empty() {
            return Err(Error::Config(
                "need at least one reference threshold".into(),
            ));
        }
        if self.taus.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::Config(format!(
                "thresholds {:?} outside [0,1]",
                self.taus
            )));
        }
        if self.taus.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "thresholds {:?} must be strictly increasing",
                self.taus
            )));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!(
                "epsilon {} must be >= 0",
                self.epsilon
            )));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!("gamma {} must be > 0", self.gamma)));
        }
        let min_tau = self.taus.iter().copied().fold(1.0, f64::min);
        // Equality is allowed: the default grid starts at rho itself, where
        // the only admissible curve is the flat one.
        if !(self.rho >= 0.0 && self.rho <= min_tau) {
            return Err(Error::Config(format!(
                "rho {} must satisfy 0 <= rho <= min(taus) = {min_tau}",
                self.rho
            )));
        }
        BasisSpec::new(self.knots, self.domain)?;
        self.optimizer.validate()?;
        self.matching.validate()
    }

    /// Box bounds on each coefficient at reference threshold `tau0`.
    pub fn bounds(&self, tau0: f64) -> Vec<(f64, f64)> {
        let b = match self.coeff_bounds {
            BoundsMode::Safe => (0.0, (tau0 - self.rho).max(0.0)),
            BoundsMode::Literal => (self.rho, 1.0),
        };
        vec![b; self.knots]
    }

    fn fp_cap(&self, fp_static: usize) -> f64 {
        fp_static as f64 * (1.0 + self.epsilon)
    }
}

struct PreparedDet {
    score: f64,
    first: usize,
    basis: [f64; 4],
    cands: std::ops::Range<usize>,
}

/// Fitting corpus for one reference threshold: detections in per-image
/// score order with their basis values and eligible ground truth cached.
/// Candidate sets are disjoint across images, so one pass over the flat
/// list reproduces per-image greedy matching.
pub struct FitProblem {
    tau0: f64,
    knots: usize,
    dets: Vec<PreparedDet>,
    cand_pool: Vec<usize>,
    gt_total: usize,
}

/// Counts at one coefficient vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
}

impl FitProblem {
    /// `score_floor`: detections below it are dropped up front because no
    /// admissible curve can keep them.
    pub fn new(
        dets: &[Detection],
        gts: &[GroundTruthBox],
        catalog: &DepthCatalog,
        tau0: f64,
        cfg: &FitConfig,
        score_floor: f64,
    ) -> Result<Self> {
        let basis = BasisSpec::new(cfg.knots, cfg.domain)?;
        let mut prepared = Vec::new();
        let mut cand_pool = Vec::new();
        let mut gt_offset = 0;
        for (image, group) in group_by_image(dets, gts) {
            let g: Vec<&GroundTruthBox> = group.gts.iter().map(|&j| &gts[j]).collect();
            let mut order: Vec<usize> = group.dets.clone();
            order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));
            order.retain(|&i| dets[i].score >= score_floor);
            if !order.is_empty() {
                let index = catalog.get(image)?;
                for i in order {
                    let d = &dets[i];
                    let (first, vals) = basis.nonzero(index.box_depth(&d.bbox)?);
                    let start = cand_pool.len();
                    cand_pool.extend(
                        candidates(d, &g, &cfg.matching)
                            .into_iter()
                            .map(|j| j + gt_offset),
                    );
                    prepared.push(PreparedDet {
                        score: d.score,
                        first,
                        basis: vals,
                        cands: start..cand_pool.len(),
                    });
                }
            }
            gt_offset += g.len();
        }
        Ok(Self {
            tau0,
            knots: cfg.knots,
            dets: prepared,
            cand_pool,
            gt_total: gt_offset,
        })
    }

    pub fn tau0(&self) -> f64 {
        self.tau0
    }

    /// TP / FP after filtering with `psi` and greedy matching.
    pub fn counts(&self, psi: &[f64]) -> Counts {
        debug_assert_eq!(psi.len(), self.knots);
        let mut taken = vec![false; self.gt_total];
        let (mut tp, mut fp) = (0, 0);
        for d in &self.dets {
            let tau = (self.tau0 - dot4(&d.basis, &psi[d.first..d.first + 4])).clamp(0.0, 1.0);
            if d.score < tau {
                continue;
            }
            match self.cand_pool[d.cands.clone()].iter().find(|&&j| !taken[j]) {
                Some(&j) => {
                    taken[j] = true;
                    tp += 1;
                }
                None => fp += 1,
            }
        }
        Counts { tp, fp }
    }

    /// Counts at the constant threshold.
    pub fn static_counts(&self) -> Counts {
        self.counts(&vec![0.0; self.knots])
    }
}

fn ratio(td: usize, ed: usize) -> f64 {
    td as f64 / ed.max(1) as f64
}

/// Objective value for counts `c` given the static baseline.
pub fn score_counts(c: Counts, baseline: Counts, cfg: &FitConfig) -> f64 {
    let penalty = cfg.gamma * (c.fp as f64 - cfg.fp_cap(baseline.fp)).max(0.0);
    let d_td = c.tp as f64 - baseline.tp as f64;
    let d_ed = c.fp as f64 - baseline.fp as f64;
    match cfg.objective {
        ObjectiveVariant::Base => c.tp as f64 - penalty,
        ObjectiveVariant::AbsRatio => d_td - d_ed + ratio(c.tp, c.fp) - penalty,
        ObjectiveVariant::RelRatio => {
            d_td - d_ed + (ratio(c.tp, c.fp) - ratio(baseline.tp, baseline.fp)) - penalty
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveValue {
    pub m: f64,
    pub tp: usize,
    pub fp: usize,
}

/// Objective at `psi` for reference threshold `tau0` on the given corpus.
pub fn objective(
    psi: &[f64],
    dets: &[Detection],
    gts: &[GroundTruthBox],
    catalog: &DepthCatalog,
    tau0: f64,
    cfg: &FitConfig,
) -> Result<ObjectiveValue> {
    if psi.len() != cfg.knots {
        return Err(Error::domain(format!(
            "expected {} coefficients, got {}",
            cfg.knots,
            psi.len()
        )));
    }
    let problem = FitProblem::new(dets, gts, catalog, tau0, cfg, 0.0)?;
    let base = problem.static_counts();
    let c = problem.counts(psi);
    Ok(ObjectiveValue {
        m: score_counts(c, base, cfg),
        tp: c.tp,
        fp: c.fp,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOutcome {
    pub curve: ThresholdCurve,
    pub tp_static: usize,
    pub fp_static: usize,
    pub tp_star: usize,
    pub fp_star: usize,
    pub objective_value: f64,
    pub objective_at_zero: f64,
    pub evaluations_used: usize,
    /// `fp_star <= fp_static * (1 + epsilon)`.
    pub feasible: bool,
    /// Factor applied to the optimizer's best point during repair (1 if none).
    pub repair_scale: f64,
    pub history: Vec<GenerationRecord>,
}

/// Fit with the default differential-evolution optimizer.
pub fn fit_curve(
    dets: &[Detection],
    gts: &[GroundTruthBox],
    catalog: &DepthCatalog,
    tau0: f64,
    cfg: &FitConfig,
) -> Result<FitOutcome> {
    let de = DifferentialEvolution::new(cfg.optimizer.clone())?;
    fit_curve_with(&de, dets, gts, catalog, tau0, cfg)
}

/// Per-threshold RNG stream, so each fit is reproducible on its own.
fn stream_for(tau0: f64) -> u64 {
    tau0.to_bits()
}

pub fn fit_curve_with(
    optimizer: &dyn BoxOptimizer,
    dets: &[Detection],
    gts: &[GroundTruthBox],
    catalog: &DepthCatalog,
    tau0: f64,
    cfg: &FitConfig,
) -> Result<FitOutcome> {
    cfg.validate()?;
    if dets.is_empty() {
        return Err(Error::domain(
            "cannot fit a threshold curve on an empty corpus",
        ));
    }
    if !(0.0..=1.0).contains(&tau0) {
        return Err(Error::domain(format!("tau0 {tau0} outside [0,1]")));
    }
    let bounds = cfg.bounds(tau0);
    let max_drop: f64 = bounds.iter().map(|b| b.1.max(0.0)).fold(0.0, f64::max);
    // Small margin so rounding in the basis sum never drops a reachable detection.
    let floor = (tau0 - max_drop - 1e-9).max(0.0);
    let problem = FitProblem::new(dets, gts, catalog, tau0, cfg, floor)?;
    let base = problem.static_counts();
    let f = |psi: &[f64]| score_counts(problem.counts(psi), base, cfg);

    let zero = vec![0.0; cfg.knots];
    let result = optimizer.maximize(&f, &bounds, std::slice::from_ref(&zero), stream_for(tau0))?;
    let mut evaluations = result.evaluations;
    let mut psi = result.best.x;
    let mut repair_scale = 1.0;
    let cap = cfg.fp_cap(base.fp);
    if problem.counts(&psi).fp as f64 > cap {
        // Shrink toward the no-op curve; scale 0 is always feasible.
        let mut chosen: Option<(f64, f64)> = None;
        for k in 0..=20 {
            let s = 1.0 - k as f64 * 0.05;
            let s = if k == 20 { 0.0 } else { s };
            let scaled: Vec<f64> = psi.iter().map(|p| p * s).collect();
            let c = problem.counts(&scaled);
            evaluations += 1;
            if c.fp as f64 <= cap {
                let m = score_counts(c, base, cfg);
                if chosen.is_none_or(|(_, best)| m > best) {
                    chosen = Some((s, m));
                }
            }
        }
        let (s, _) = chosen.expect("zero coefficients reproduce the static count");
        repair_scale = s;
        psi = psi.iter().map(|p| p * s).collect();
    }
    let star = problem.counts(&psi);
    Ok(FitOutcome {
        curve: ThresholdCurve {
            tau0,
            knot_domain: cfg.domain,
            psi,
            rho: cfg.rho,
        },
        tp_static: base.tp,
        fp_static: base.fp,
        tp_star: star.tp,
        fp_star: star.fp,
        objective_value: score_counts(star, base, cfg),
        objective_at_zero: score_counts(base, base, cfg),
        evaluations_used: evaluations,
        feasible: star.fp as f64 <= cap,
        repair_scale,
        history: result.history,
    })
}

/// Fits every reference threshold in `cfg.taus` (in parallel) and returns
/// the table together with the per-threshold outcomes.
pub fn build_lut_with_outcomes(
    dets: &[Detection],
    gts: &[GroundTruthBox],
    catalog: &DepthCatalog,
    cfg: &FitConfig,
) -> Result<(LookupTable, Vec<FitOutcome>)> {
    cfg.validate()?;
    let outcomes: Vec<FitOutcome> = cfg
        .taus
        .par_iter()
        .map(|&tau0| fit_curve(dets, gts, catalog, tau0, cfg))
        .collect::<Result<_>>()?;
    let table = LookupTable::new(
        outcomes.iter().map(|o| o.curve.clone()).collect(),
        cfg.clone(),
    )?;
    Ok((table, outcomes))
}

pub fn build_lut(
    dets: &[Detection],
    gts: &[GroundTruthBox],
    catalog: &DepthCatalog,
    cfg: &FitConfig,
) -> Result<LookupTable> {
    build_lut_with_outcomes(dets, gts, catalog, cfg).map(|(t, _)| t)
}

/// One line of the fit log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitLogRecord {
    pub tau0: f64,
    pub generation: usize,
    pub best_m: f64,
    pub evaluations: usize,
}

/// Fit log as JSONL, one record per (threshold, generation).
pub fn fit_log_jsonl(outcomes: &[FitOutcome]) -> Result<String> {
    let mut out = String::new();
    for o in outcomes {
        for h in &o.history {
            let rec = FitLogRecord {
                tau0: o.curve.tau0,
                generation: h.generation,
                best_m: h.best_value,
                evaluations: h.evaluations,
            };
            out.push_str(&serde_json::to_string(&rec).map_err(|e| Error::Format(e.to_string()))?);
            out.push('\n');
        }
    }
    Ok(out)
}

/// Keeps detections scoring at least `tau0`; order preserved.
pub fn filter_static(dets: &[Detection], tau0: f64) -> Vec<Detection> {
    dets.iter().filter(|d| d.score >= tau0).cloned().collect()
}

/// Keeps detection `i` iff `s_i >= tau(d_i)`; order preserved.
pub fn filter_with_curve(
    dets: &[Detection],
    catalog: &DepthCatalog,
    curve: &ThresholdCurve,
) -> Result<Vec<Detection>> {
    let eval = CurveEvaluator::new(curve)?;
    let mut kept = Vec::new();
    for d in dets {
        let depth = catalog.box_depth(&d.image_id, &d.bbox)?;
        if d.score >= eval.threshold_at(depth) {
            kept.push(d.clone());
        }
    }
    Ok(kept)
}

/// Deployment: look up the curve for `tau0` (exact key) and filter.
pub fn apply_lut(
    dets: &[Detection],
    catalog: &DepthCatalog,
    tau0: f64,
    lut: &LookupTable,
) -> Result<Vec<Detection>> {
    filter_with_curve(dets, catalog, lut.get(tau0)?)
}
