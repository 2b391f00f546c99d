use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One scored candidate. Higher `value` wins; equal values prefer the
/// smaller L1 norm, which pulls plateaus toward the no-op curve.
#[derive(Debug, Clone, PartialEq)]
pub struct Scored {
    pub x: Vec<f64>,
    pub value: f64,
}

impl Scored {
    fn norm(&self) -> f64 {
        self.x.iter().map(|v| v.abs()).sum()
    }

    /// True if `self` should replace `other`.
    pub fn at_least_as_good(&self, other: &Scored) -> bool {
        self.value > other.value || (self.value == other.value && self.norm() <= other.norm())
    }

    fn strictly_better(&self, other: &Scored) -> bool {
        self.value > other.value || (self.value == other.value && self.norm() < other.norm())
    }
}

/// Best candidate after each generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    pub best_value: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone)]
pub struct OptimizeResult {
    pub best: Scored,
    pub evaluations: usize,
    pub history: Vec<GenerationRecord>,
}

/// A seeded, budgeted maximizer over a box. Implementations must evaluate
/// every point in `seeds` before anything else and return the best point
/// seen.
pub trait BoxOptimizer: Sync {
    fn maximize(
        &self,
        objective: &(dyn Fn(&[f64]) -> f64 + Sync),
        bounds: &[(f64, f64)],
        seeds: &[Vec<f64>],
        rng_stream: u64,
    ) -> Result<OptimizeResult>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub seed: u64,
    pub population: usize,
    pub generations: usize,
    /// Stop after this many generations without improvement.
    pub stagnation: usize,
    /// Hard cap on objective evaluations; `None` means population x generations.
    pub max_evaluations: Option<usize>,
    pub differential_weight: f64,
    pub crossover: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            population: 32,
            generations: 200,
            stagnation: 40,
            max_evaluations: None,
            differential_weight: 0.7,
            crossover: 0.9,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 4 {
            return Err(Error::Config(format!(
                "population must be at least 4, got {}",
                self.population
            )));
        }
        if !(self.differential_weight > 0.0 && self.differential_weight <= 2.0) {
            return Err(Error::Config(
                "differential weight must lie in (0, 2]".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.crossover) {
            return Err(Error::Config("crossover rate must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// rand/1/bin differential evolution. Trial vectors are drawn serially from
/// a ChaCha8 stream, scored in parallel and selected serially, so results do
/// not depend on thread scheduling.
#[derive(Debug, Clone, Default)]
pub struct DifferentialEvolution {
    pub config: OptimizerConfig,
}

impl DifferentialEvolution {
    pub fn new(config: OptimizerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }
}

fn clamp_into(x: &mut [f64], bounds: &[(f64, f64)]) {
    for (v, &(lo, hi)) in x.iter_mut().zip(bounds) {
        *v = v.clamp(lo, hi);
    }
}

fn score_all(objective: &(dyn Fn(&[f64]) -> f64 + Sync), xs: Vec<Vec<f64>>) -> Vec<Scored> {
    xs.into_par_iter()
        .map(|x| {
            let value = objective(&x);
            Scored { x, value }
        })
        .collect()
}

fn best_index(pop: &[Scored]) -> usize {
    let mut b = 0;
    for i in 1..pop.len() {
        if pop[i].strictly_better(&pop[b]) {
            b = i;
        }
    }
    b
}

impl BoxOptimizer for DifferentialEvolution {
    fn maximize(
        &self,
        objective: &(dyn Fn(&[f64]) -> f64 + Sync),
        bounds: &[(f64, f64)],
        seeds: &[Vec<f64>],
        rng_stream: u64,
    ) -> Result<OptimizeResult> {
        let cfg = &self.config;
        cfg.validate()?;
        if bounds
            .iter()
            .any(|&(lo, hi)| !(lo <= hi) || !lo.is_finite() || !hi.is_finite())
        {
            return Err(Error::Config(format!("invalid search bounds {bounds:?}")));
        }
        if seeds.iter().any(|s| s.len() != bounds.len()) {
            return Err(Error::Config("seed point has the wrong dimension".into()));
        }
        let budget = cfg
            .max_evaluations
            .unwrap_or(cfg.population * (cfg.generations + 1))
            .max(seeds.len());
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(rng_stream);

        let np = cfg.population.max(seeds.len()).min(budget.max(1));
        let mut init: Vec<Vec<f64>> = seeds.to_vec();
        while init.len() < np {
            init.push(
                bounds
                    .iter()
                    .map(|&(lo, hi)| {
                        if hi > lo {
                            rng.random_range(lo..=hi)
                        } else {
                            lo
                        }
                    })
                    .collect(),
            );
        }
        let mut pop = score_all(objective, init);
        let mut evaluations = pop.len();
        let mut best = pop[best_index(&pop)].clone();
        let mut history = vec![GenerationRecord {
            generation: 0,
            best_value: best.value,
            evaluations,
        }];
        if np < 4 || bounds.is_empty() {
            return Ok(OptimizeResult {
                best,
                evaluations,
                history,
            });
        }

        let dim = bounds.len();
        let mut stagnant = 0;
        for generation in 1..=cfg.generations {
            if evaluations + np > budget || stagnant >= cfg.stagnation {
                break;
            }
            let trials: Vec<Vec<f64>> = (0..np)
                .map(|i| {
                    let mut pick = || loop {
                        let r = rng.random_range(0..np);
                        if r != i {
                            break r;
                        }
                    };
                    let r1 = pick();
                    let (mut r2, mut r3) = (pick(), pick());
                    while r2 == r1 {
                        r2 = pick();
                    }
                    while r3 == r1 || r3 == r2 {
                        r3 = pick();
                    }
                    let jrand = rng.random_range(0..dim);
                    let mut trial = pop[i].x.clone();
                    for (j, t) in trial.iter_mut().enumerate() {
                        if j == jrand || rng.random::<f64>() < cfg.crossover {
                            *t = pop[r1].x[j]
                                + cfg.differential_weight * (pop[r2].x[j] - pop[r3].x[j]);
                        }
                    }
                    clamp_into(&mut trial, bounds);
                    trial
                })
                .collect();
            let scored = score_all(objective, trials);
            evaluations += np;
            for (slot, trial) in pop.iter_mut().zip(scored) {
                if trial.at_least_as_good(slot) {
                    *slot = trial;
                }
            }
            let gen_best = &pop[best_index(&pop)];
            if gen_best.strictly_better(&best) {
                best = gen_best.clone();
                stagnant = 0;
            } else {
                stagnant += 1;
            }
            history.push(GenerationRecord {
                generation,
                best_value: best.value,
                evaluations,
            });
        }
        Ok(OptimizeResult {
            best,
            evaluations,
            history,
        })
    }
}
