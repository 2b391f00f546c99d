//! Small simulations of depth-dependent loss noise: variance growing as
//! `sigma0^2 d^2 + sigma_eps^2` with `sigma0^2 = alpha^2 / kappa`, and its
//! effect on an SGD learner under different sample weightings.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub kappa: f64,
    pub alpha_signal: f64,
    pub sigma_eps: f64,
    pub n_samples: usize,
    pub depth_range: (f64, f64),
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            kappa: 1.0,
            alpha_signal: 1.0,
            sigma_eps: 0.1,
            n_samples: 100_000,
            depth_range: (0.05, 1.0),
            seed: 0,
        }
    }
}

impl SimConfig {
    /// `alpha_signal = 0` is accepted and gives homoscedastic noise.
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.depth_range;
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::Config(format!("kappa {} must be > 0", self.kappa)));
        }
        if !(self.alpha_signal >= 0.0 && self.alpha_signal.is_finite()) {
            return Err(Error::Config(format!(
                "alpha {} must be >= 0",
                self.alpha_signal
            )));
        }
        if !(self.sigma_eps >= 0.0 && self.sigma_eps.is_finite()) {
            return Err(Error::Config(format!(
                "sigma_eps {} must be >= 0",
                self.sigma_eps
            )));
        }
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(Error::Config(format!(
                "depth range ({lo}, {hi}) needs 0 < min < max"
            )));
        }
        if self.n_samples == 0 {
            return Err(Error::Config("n_samples must be positive".into()));
        }
        Ok(())
    }

    pub fn sigma0_sq(&self) -> f64 {
        self.alpha_signal * self.alpha_signal / self.kappa
    }

    /// Loss variance at depth `d`.
    pub fn variance(&self, d: f64) -> f64 {
        self.sigma0_sq() * d * d + self.sigma_eps * self.sigma_eps
    }

    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSample {
    pub depth: f64,
    pub noise: f64,
}

fn draw(cfg: &SimConfig, rng: &mut ChaCha8Rng) -> Vec<LossSample> {
    let (lo, hi) = cfg.depth_range;
    (0..cfg.n_samples)
        .map(|_| {
            let depth = rng.random_range(lo..hi);
            let sd = cfg.variance(depth).sqrt();
            let noise = if sd > 0.0 {
                Normal::new(0.0, sd)
                    .expect("finite positive sd")
                    .sample(rng)
            } else {
                0.0
            };
            LossSample { depth, noise }
        })
        .collect()
}

/// Depths uniform over the range, zero-mean Gaussian loss noise.
pub fn sample_losses(cfg: &SimConfig) -> Result<Vec<LossSample>> {
    cfg.validate()?;
    Ok(draw(cfg, &mut cfg.rng()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub mean_depth_sq: f64,
    pub variance: f64,
}

/// Regression of per-bin variance on mean squared depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceFit {
    pub slope: f64,
    pub intercept: f64,
    pub bins: Vec<VarianceBin>,
}

fn weighted_line(x: &[f64], y: &[f64], w: &[f64]) -> (f64, f64) {
    let sw: f64 = w.iter().sum();
    let mx = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for ((a, b), c) in x.iter().zip(y).zip(w) {
        sxy += c * (a - mx) * (b - my);
        sxx += c * (a - mx) * (a - mx);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Bins samples uniformly in depth and fits `var = slope * d^2 + intercept`
/// by feasible weighted least squares: the sampling error of a variance
/// estimate scales with the variance itself, so bins are weighted by
/// `n / fitted^2` from an unweighted first pass.
pub fn variance_law_fit(samples: &[LossSample], bins: usize) -> Result<VarianceFit> {
    if bins < 2 {
        return Err(Error::domain("need at least two depth bins"));
    }
    let lo = samples
        .iter()
        .map(|s| s.depth)
        .fold(f64::INFINITY, f64::min);
    let hi = samples
        .iter()
        .map(|s| s.depth)
        .fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Err(Error::domain("samples span no depth range"));
    }
    let width = (hi - lo) / bins as f64;
    let mut groups: Vec<Vec<&LossSample>> = vec![Vec::new(); bins];
    for s in samples {
        let b = (((s.depth - lo) / width) as usize).min(bins - 1);
        groups[b].push(s);
    }
    let mut out = Vec::new();
    for (b, g) in groups.iter().enumerate() {
        if g.len() < 2 {
            continue;
        }
        let n = g.len() as f64;
        let mean = g.iter().map(|s| s.noise).sum::<f64>() / n;
        let variance = g.iter().map(|s| (s.noise - mean).powi(2)).sum::<f64>() / (n - 1.0);
        out.push(VarianceBin {
            lo: lo + b as f64 * width,
            hi: lo + (b + 1) as f64 * width,
            count: g.len(),
            mean_depth_sq: g.iter().map(|s| s.depth * s.depth).sum::<f64>() / n,
            variance,
        });
    }
    if out.len() < 2 {
        return Err(Error::domain("fewer than two populated bins"));
    }
    let x: Vec<f64> = out.iter().map(|b| b.mean_depth_sq).collect();
    let y: Vec<f64> = out.iter().map(|b| b.variance).collect();
    let mut w: Vec<f64> = out.iter().map(|b| b.count as f64).collect();
    let mut fit = weighted_line(&x, &y, &w);
    for _ in 0..3 {
        w = out
            .iter()
            .zip(&x)
            .map(|(b, xi)| {
                let f = (fit.0 * xi + fit.1).max(1e-12);
                b.count as f64 / (f * f)
            })
            .collect();
        fit = weighted_line(&x, &y, &w);
    }
    Ok(VarianceFit {
        slope: fit.0,
        intercept: fit.1,
        bins: out,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimWeighting {
    Uniform,
    /// `w(d)` proportional to the loss variance at `d`.
    Compensating,
    /// `1 + exp(d_norm)` with depth min-max normalized over the range.
    DlwExponential,
}

/// Unnormalized variance-compensating weight.
pub fn compensating_weight(cfg: &SimConfig, d: f64) -> f64 {
    cfg.variance(d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BiasConfig {
    /// Piecewise-constant learner resolution over the depth range.
    pub cells: usize,
    /// Error is reported over this many equal-width depth bins.
    pub eval_bins: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// The constant regression target.
    pub target: f64,
    /// Huber threshold on the residual; `None` trains on the squared loss.
    /// With clipping, noisy samples pull less per step and converge later.
    pub huber_delta: Option<f64>,
}

impl Default for BiasConfig {
    fn default() -> Self {
        Self {
            cells: 50,
            eval_bins: 5,
            epochs: 3,
            learning_rate: 0.05,
            target: 1.0,
            huber_delta: Some(0.3),
        }
    }
}

impl BiasConfig {
    pub fn validate(&self) -> Result<()> {
        if self.eval_bins == 0 || self.cells == 0 || !self.cells.is_multiple_of(self.eval_bins) {
            return Err(Error::Config(format!(
                "cells ({}) must be a positive multiple of eval_bins ({})",
                self.cells, self.eval_bins
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("need at least one epoch".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if let Some(d) = self.huber_delta {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::Config(format!("huber delta {d} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub epoch: usize,
    /// Mean squared error of the learner per eval bin, nearest first.
    pub bin_errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasTrajectory {
    pub seed: u64,
    pub weighting: SimWeighting,
    pub checkpoints: Vec<Checkpoint>,
}

impl BiasTrajectory {
    /// Far-bin minus near-bin error at the last checkpoint.
    pub fn final_gap(&self) -> f64 {
        let last = self.checkpoints.last().expect("at least one checkpoint");
        last.bin_errors[last.bin_errors.len() - 1] - last.bin_errors[0]
    }

    /// `seed,epoch,bin,error` rows (no header).
    pub fn csv_rows(&self) -> String {
        let mut out = String::new();
        for c in &self.checkpoints {
            for (b, e) in c.bin_errors.iter().enumerate() {
                out.push_str(&format!("{},{},{},{}\n", self.seed, c.epoch, b, e));
            }
        }
        out
    }
}

pub const TRAJECTORY_CSV_HEADER: &str = "seed,epoch,bin,error\n";

/// Trains a piecewise-constant regressor (initialized at 0) toward a
/// constant target observed through heteroscedastic noise, using weighted
/// SGD on the Huber loss (or squared loss if `huber_delta` is `None`). Weights are normalized to mean 1 over the
/// dataset. The data and visiting order depend only on `cfg.seed`, so
/// different weightings with the same seed are paired.
pub fn bias_experiment(
    cfg: &SimConfig,
    weighting: SimWeighting,
    bias: &BiasConfig,
) -> Result<BiasTrajectory> {
    cfg.validate()?;
    bias.validate()?;
    let mut rng = cfg.rng();
    let data = draw(cfg, &mut rng);
    let (lo, hi) = cfg.depth_range;
    let cell_of =
        |d: f64| (((d - lo) / (hi - lo) * bias.cells as f64) as usize).min(bias.cells - 1);
    let raw: Vec<f64> = data
        .iter()
        .map(|s| match weighting {
            SimWeighting::Uniform => 1.0,
            SimWeighting::Compensating => compensating_weight(cfg, s.depth),
            SimWeighting::DlwExponential => 1.0 + ((s.depth - lo) / (hi - lo)).exp(),
        })
        .collect();
    let mean_w = raw.iter().sum::<f64>() / raw.len() as f64;
    let weights: Vec<f64> = if mean_w > 0.0 {
        raw.iter().map(|w| w / mean_w).collect()
    } else {
        vec![1.0; raw.len()]
    };

    let mut theta = vec![0.0; bias.cells];
    let mut order: Vec<usize> = (0..data.len()).collect();
    let per_bin = bias.cells / bias.eval_bins;
    let mut checkpoints = Vec::with_capacity(bias.epochs);
    for epoch in 1..=bias.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let c = cell_of(data[i].depth);
            let y = bias.target + data[i].noise;
            let r = theta[c] - y;
            let g = bias.huber_delta.map_or(r, |d| r.clamp(-d, d));
            theta[c] -= bias.learning_rate * weights[i] * g;
        }
        let bin_errors = theta
            .chunks(per_bin)
            .map(|ch| ch.iter().map(|t| (t - bias.target).powi(2)).sum::<f64>() / per_bin as f64)
            .collect();
        checkpoints.push(Checkpoint { epoch, bin_errors });
    }
    Ok(BiasTrajectory {
        seed: cfg.seed,
        weighting,
        checkpoints,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variance_law() {
        let cfg = SimConfig {
            sigma_eps: 0.5,
            ..SimConfig::default()
        };
        assert_eq!(cfg.variance(0.0), 0.25);
        assert_eq!(cfg.variance(2.0), 4.25);
    }

    #[test]
    fn compensating_ratio_approaches_four() {
        let cfg = SimConfig {
            sigma_eps: 1e-6,
            ..SimConfig::default()
        };
        let r = compensating_weight(&cfg, 10.0) / compensating_weight(&cfg, 5.0);
        assert!((r - 4.0).abs() < 1e-9);
    }

    #[test]
    fn sampling_is_reproducible() {
        let cfg = SimConfig {
            n_samples: 100,
            seed: 9,
            ..SimConfig::default()
        };
        assert_eq!(sample_losses(&cfg).unwrap(), sample_losses(&cfg).unwrap());
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = SimConfig {
            depth_range: (0.0, 1.0),
            ..SimConfig::default()
        };
        assert!(cfg.validate().is_err());
        let bias = BiasConfig {
            cells: 7,
            ..BiasConfig::default()
        };
        assert!(bias.validate().is_err());
    }

    #[test]
    fn trajectory_has_one_checkpoint_per_epoch() {
        let cfg = SimConfig {
            n_samples: 500,
            ..SimConfig::default()
        };
        let t = bias_experiment(&cfg, SimWeighting::Uniform, &BiasConfig::default()).unwrap();
        assert_eq!(t.checkpoints.len(), 3);
        assert_eq!(t.checkpoints[0].bin_errors.len(), 5);
        assert_eq!(t.csv_rows().lines().count(), 15);
    }
}
