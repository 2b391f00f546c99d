use serde::{Deserialize, Serialize};

use crate::depthnorm::downsample_to_level;
use crate::error::{Error, Result};
use crate::types::NormalizedDepthMap;

/// How the stratum boundaries are interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CutMode {
    /// Boundaries are normalized-depth values.
    Absolute,
    /// Boundaries are quantile levels of each image's normalized depths.
    #[default]
    Quantile,
}

/// K-way depth stratification. `cuts[0]` is `beta` in the binary case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratConfig {
    pub mode: CutMode,
    pub cuts: Vec<f64>,
    pub lambdas: Vec<f64>,
}

impl Default for StratConfig {
    fn default() -> Self {
        Self {
            mode: CutMode::Quantile,
            cuts: vec![0.5],
            lambdas: vec![1.0, 2.0],
        }
    }
}

impl StratConfig {
    pub fn new(mode: CutMode, cuts: Vec<f64>, lambdas: Vec<f64>) -> Result<Self> {
        let cfg = Self {
            mode,
            cuts,
            lambdas,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Close/distant split at `beta`.
    pub fn binary(
        beta: f64,
        mode: CutMode,
        lambda_close: f64,
        lambda_distant: f64,
    ) -> Result<Self> {
        Self::new(mode, vec![beta], vec![lambda_close, lambda_distant])
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.lambdas.len();
        if k < 2 {
            return Err(Error::Config(format!("need at least 2 strata, got {k}")));
        }
        if self.cuts.len() != k - 1 {
            return Err(Error::Config(format!(
                "{k} strata need {} cuts, got {}",
                k - 1,
                self.cuts.len()
            )));
        }
        if let Some(l) = self.lambdas.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(Error::Config(format!(
                "stratum weight {l} must be positive"
            )));
        }
        if self.cuts.iter().any(|c| !(*c > 0.0 && *c < 1.0)) {
            return Err(Error::Config(format!(
                "cuts {:?} must lie in (0,1)",
                self.cuts
            )));
        }
        if self.cuts.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "cuts {:?} must be strictly increasing",
                self.cuts
            )));
        }
        Ok(())
    }

    pub fn beta(&self) -> f64 {
        self.cuts[0]
    }

    pub fn strata(&self) -> usize {
        self.lambdas.len()
    }
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Linear-interpolation quantile (`q` in `[0, 1]`) of `values`.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_sorted(&sorted, q)
}

/// Depth boundaries for one image: `cfg.cuts` in absolute mode, the image's
/// quantiles at `cfg.cuts` in quantile mode.
pub fn resolve_cuts(map: &NormalizedDepthMap, cfg: &StratConfig) -> Vec<f64> {
    match cfg.mode {
        CutMode::Absolute => cfg.cuts.clone(),
        CutMode::Quantile => {
            let mut sorted = map.values().to_vec();
            sorted.sort_by(f64::total_cmp);
            cfg.cuts
                .iter()
                .map(|&q| quantile_sorted(&sorted, q))
                .collect()
        }
    }
}

/// Stratum index of every cell of one feature level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelStrata {
    pub height: usize,
    pub width: usize,
    pub stratum: Vec<u8>,
}

/// Per-level stratum assignments; each cell belongs to exactly one stratum,
/// so the derived binary masks partition every level.
#[derive(Debug, Clone, PartialEq)]
pub struct StratMasks {
    strata: usize,
    cuts: Vec<f64>,
    levels: Vec<LevelStrata>,
}

impl StratMasks {
    pub fn strata(&self) -> usize {
        self.strata
    }

    /// Depth boundaries actually applied (after quantile resolution).
    pub fn cuts(&self) -> &[f64] {
        &self.cuts
    }

    pub fn levels(&self) -> &[LevelStrata] {
        &self.levels
    }

    /// Binary mask of stratum `k` at `level`.
    pub fn mask(&self, level: usize, k: usize) -> Vec<u8> {
        self.levels[level]
            .stratum
            .iter()
            .map(|&s| u8::from(s as usize == k))
            .collect()
    }
}

/// Rescales `norm_map` to each `(H_l, W_l)` and splits cells at the
/// configured boundaries; a value equal to a boundary goes to the farther
/// stratum.
pub fn build_strat_masks(
    norm_map: &NormalizedDepthMap,
    cfg: &StratConfig,
    levels: &[(usize, usize)],
) -> Result<StratMasks> {
    cfg.validate()?;
    if levels.is_empty() {
        return Err(Error::domain(
            "stratification needs at least one feature level",
        ));
    }
    let cuts = resolve_cuts(norm_map, cfg);
    let levels = levels
        .iter()
        .map(|&(h, w)| {
            let scaled = downsample_to_level(norm_map, h, w)?;
            let stratum = scaled
                .values()
                .iter()
                .map(|&v| cuts.iter().filter(|&&c| v >= c).count() as u8)
                .collect();
            Ok(LevelStrata {
                height: h,
                width: w,
                stratum,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StratMasks {
        strata: cfg.strata(),
        cuts,
        levels,
    })
}

/// Per-cell classification and box losses at one feature level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelLoss {
    pub height: usize,
    pub width: usize,
    pub cls: Vec<f64>,
    pub boxes: Vec<f64>,
}

/// One image's loss grids across all feature levels.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageLosses {
    pub levels: Vec<LevelLoss>,
}

/// Normalization of the per-stratum terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StratNormalization {
    /// `(1/L) sum_l (1/N) sum_n sum_hw loss * mask_k` (masked sums).
    #[default]
    MaskedSum,
    /// Mean loss over the cells of each stratum, pooled across images and
    /// levels; an empty stratum contributes 0.
    StratumMean,
}

/// Per-stratum loss terms `L_k`.
pub fn stratum_losses(
    images: &[ImageLosses],
    masks: &[StratMasks],
    norm: StratNormalization,
) -> Result<Vec<f64>> {
    if images.is_empty() || images.len() != masks.len() {
        return Err(Error::domain(format!(
            "{} loss fields for {} mask sets",
            images.len(),
            masks.len()
        )));
    }
    let k = masks[0].strata();
    let n_levels = images[0].levels.len();
    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for (n, (img, m)) in images.iter().zip(masks).enumerate() {
        if m.strata() != k || img.levels.len() != n_levels || m.levels().len() != n_levels {
            return Err(Error::domain(format!(
                "image {n}: level or stratum count does not match the batch"
            )));
        }
        for (l, (loss, strata)) in img.levels.iter().zip(m.levels()).enumerate() {
            let cells = loss.height * loss.width;
            if loss.height != strata.height
                || loss.width != strata.width
                || loss.cls.len() != cells
                || loss.boxes.len() != cells
            {
                return Err(Error::domain(format!(
                    "image {n} level {l}: loss grid {}x{} does not match mask {}x{}",
                    loss.height, loss.width, strata.height, strata.width
                )));
            }
            for ((c, b), &s) in loss.cls.iter().zip(&loss.boxes).zip(&strata.stratum) {
                sums[s as usize] += c + b;
                counts[s as usize] += 1;
            }
        }
    }
    Ok(match norm {
        StratNormalization::MaskedSum => {
            let scale = 1.0 / (n_levels as f64 * images.len() as f64);
            sums.iter().map(|s| s * scale).collect()
        }
        StratNormalization::StratumMean => sums
            .iter()
            .zip(&counts)
            .map(|(s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
            .collect(),
    })
}

/// `sum_k lambda_k * L_k`.
pub fn stratified_loss(
    images: &[ImageLosses],
    masks: &[StratMasks],
    lambdas: &[f64],
    norm: StratNormalization,
) -> Result<f64> {
    let terms = stratum_losses(images, masks, norm)?;
    if lambdas.len() != terms.len() {
        return Err(Error::domain(format!(
            "{} stratum weights for {} strata",
            lambdas.len(),
            terms.len()
        )));
    }
    Ok(terms.iter().zip(lambdas).map(|(t, l)| t * l).sum())
}
