//! Gradient of the stratum-mean loss `sum_k (lambda_k / |S_k|) sum_{i in S_k} L_i`,
//! checked against central finite differences.

use crate::error::{Error, Result};

/// A per-sample differentiable loss tagged with the sample's depth.
pub trait SampleLoss {
    fn depth(&self) -> f64;
    fn value(&self, theta: &[f64]) -> f64;
    fn gradient(&self, theta: &[f64]) -> Vec<f64>;
}

/// Squared-error linear model sample: `0.5 * (x . theta - y)^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToySample {
    pub depth: f64,
    pub features: Vec<f64>,
    pub target: f64,
}

impl ToySample {
    fn residual(&self, theta: &[f64]) -> f64 {
        self.features
            .iter()
            .zip(theta)
            .map(|(x, t)| x * t)
            .sum::<f64>()
            - self.target
    }
}

impl SampleLoss for ToySample {
    fn depth(&self) -> f64 {
        self.depth
    }

    fn value(&self, theta: &[f64]) -> f64 {
        0.5 * self.residual(theta).powi(2)
    }

    fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        let r = self.residual(theta);
        self.features.iter().map(|x| r * x).collect()
    }
}

/// Stratum index from absolute depth boundaries (ties go up).
fn stratum_of(depth: f64, cuts: &[f64]) -> usize {
    cuts.iter().filter(|&&c| depth >= c).count()
}

/// Effective per-sample step multiplier `lambda_k / |S_k|` for each stratum
/// (0 for an empty stratum).
pub fn effective_rates(counts: &[usize], lambdas: &[f64]) -> Vec<f64> {
    counts
        .iter()
        .zip(lambdas)
        .map(|(&n, l)| if n == 0 { 0.0 } else { l / n as f64 })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    /// Sum of per-sample gradients scaled by their stratum's effective rate.
    pub analytic: Vec<f64>,
    /// Central finite differences of the stratified loss.
    pub numeric: Vec<f64>,
    pub counts: Vec<usize>,
    pub max_abs_deviation: f64,
}

fn stratified_value<S: SampleLoss>(
    theta: &[f64],
    samples: &[S],
    strata: &[usize],
    rates: &[f64],
) -> f64 {
    samples
        .iter()
        .zip(strata)
        .map(|(s, &k)| rates[k] * s.value(theta))
        .sum()
}

/// Compares the decomposed gradient with central differences of step `step`.
pub fn strat_gradient_check<S: SampleLoss>(
    theta: &[f64],
    samples: &[S],
    cuts: &[f64],
    lambdas: &[f64],
    step: f64,
) -> Result<GradientCheck> {
    if lambdas.len() != cuts.len() + 1 {
        return Err(Error::domain(format!(
            "{} cuts need {} stratum weights, got {}",
            cuts.len(),
            cuts.len() + 1,
            lambdas.len()
        )));
    }
    if samples.is_empty() || !(step > 0.0) {
        return Err(Error::domain(
            "gradient check needs samples and a positive step",
        ));
    }
    let strata: Vec<usize> = samples
        .iter()
        .map(|s| stratum_of(s.depth(), cuts))
        .collect();
    let mut counts = vec![0usize; lambdas.len()];
    for &k in &strata {
        counts[k] += 1;
    }
    let rates = effective_rates(&counts, lambdas);

    let mut analytic = vec![0.0; theta.len()];
    for (s, &k) in samples.iter().zip(&strata) {
        for (a, g) in analytic.iter_mut().zip(s.gradient(theta)) {
            *a += rates[k] * g;
        }
    }

    let mut probe = theta.to_vec();
    let numeric: Vec<f64> = (0..theta.len())
        .map(|j| {
            probe[j] = theta[j] + step;
            let up = stratified_value(&probe, samples, &strata, &rates);
            probe[j] = theta[j] - step;
            let down = stratified_value(&probe, samples, &strata, &rates);
            probe[j] = theta[j];
            (up - down) / (2.0 * step)
        })
        .collect();

    let max_abs_deviation = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| (a - n).abs())
        .fold(0.0, f64::max);
    Ok(GradientCheck {
        analytic,
        numeric,
        counts,
        max_abs_deviation,
    })
}
