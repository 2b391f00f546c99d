//! Clamped uniform cubic B-splines and the depth-dependent threshold curve
//! `tau(d) = clip(tau0 - sum_m psi_m * B_m(d), 0, 1)`.
//!
//! With `J` coefficients the knot vector has `J + 4` entries: the domain
//! endpoints repeated four times and `J - 4` uniformly spaced interior
//! knots. Clamping makes the curve interpolate `psi_1` at the near end and
//! `psi_J` at the far end.

use crate::error::{Error, Result};
use crate::types::ThresholdCurve;

pub const DEGREE: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct BasisSpec {
    count: usize,
    domain: (f64, f64),
    knots: Vec<f64>,
}

impl BasisSpec {
    pub fn new(count: usize, domain: (f64, f64)) -> Result<Self> {
        if count < DEGREE + 1 {
            return Err(Error::Config(format!(
                "cubic basis needs at least 4 functions, got {count}"
            )));
        }
        let (lo, hi) = domain;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Config(format!("invalid spline domain ({lo}, {hi})")));
        }
        let spans = (count - DEGREE) as f64;
        let knots = (0..count + DEGREE + 1)
            .map(|i| {
                if i <= DEGREE {
                    lo
                } else if i >= count {
                    hi
                } else {
                    lo + (hi - lo) * (i - DEGREE) as f64 / spans
                }
            })
            .collect();
        Ok(Self {
            count,
            domain,
            knots,
        })
    }

    /// Number of basis functions (`J`).
    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn clamp(&self, d: f64) -> f64 {
        d.clamp(self.domain.0, self.domain.1)
    }

    /// Knot span `k` with `knots[k] <= d < knots[k+1]`; the right endpoint
    /// belongs to the last span.
    fn span(&self, d: f64) -> usize {
        let (lo, hi) = self.domain;
        let last = self.count - 1;
        if d >= hi {
            return last;
        }
        let spans = (self.count - DEGREE) as f64;
        let mut k = (DEGREE + ((d - lo) / (hi - lo) * spans) as usize).min(last);
        while k > DEGREE && d < self.knots[k] {
            k -= 1;
        }
        while k < last && d >= self.knots[k + 1] {
            k += 1;
        }
        k
    }

    /// The (at most) four non-zero basis values at `d`: returns the index of
    /// the first one and the values for indices `first..first + 4`.
    pub fn nonzero(&self, d: f64) -> (usize, [f64; 4]) {
        let u = self.clamp(d);
        let k = self.span(u);
        let t = &self.knots;
        let mut n = [0.0; DEGREE + 1];
        let mut left = [0.0; DEGREE + 1];
        let mut right = [0.0; DEGREE + 1];
        n[0] = 1.0;
        for j in 1..=DEGREE {
            left[j] = u - t[k + 1 - j];
            right[j] = t[k + j] - u;
            let mut saved = 0.0;
            for r in 0..j {
                let tmp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * tmp;
                saved = left[j - r] * tmp;
            }
            n[j] = saved;
        }
        (k - DEGREE, n)
    }

    /// All `J` basis values at `d` (clamped into the domain first).
    pub fn eval(&self, d: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.count];
        let (first, vals) = self.nonzero(d);
        out[first..first + 4].copy_from_slice(&vals);
        out
    }

    /// `sum_m coeffs[m] * B_m(d)`.
    pub fn combine(&self, coeffs: &[f64], d: f64) -> f64 {
        debug_assert_eq!(coeffs.len(), self.count);
        let (first, vals) = self.nonzero(d);
        dot4(&vals, &coeffs[first..first + 4])
    }
}

/// Dot product of the four non-zero basis values with their coefficients.
/// Shared by every evaluation path so results agree bit for bit.
pub(crate) fn dot4(vals: &[f64; 4], coeffs: &[f64]) -> f64 {
    vals.iter().zip(coeffs).map(|(b, c)| b * c).sum()
}

/// Basis values of `spec` at `d`; see [`BasisSpec::eval`].
pub fn basis_eval(spec: &BasisSpec, d: f64) -> Vec<f64> {
    spec.eval(d)
}

/// A threshold curve paired with its basis, ready for repeated evaluation.
#[derive(Debug, Clone)]
pub struct CurveEvaluator<'a> {
    curve: &'a ThresholdCurve,
    basis: BasisSpec,
}

impl<'a> CurveEvaluator<'a> {
    pub fn new(curve: &'a ThresholdCurve) -> Result<Self> {
        let basis = BasisSpec::new(curve.psi.len(), curve.knot_domain)?;
        Ok(Self { curve, basis })
    }

    pub fn basis(&self) -> &BasisSpec {
        &self.basis
    }

    /// `tau0 - g(d)` before clipping.
    pub fn raw_threshold(&self, d: f64) -> f64 {
        self.curve.tau0 - self.basis.combine(&self.curve.psi, d)
    }

    pub fn threshold_at(&self, d: f64) -> f64 {
        self.raw_threshold(d).clamp(0.0, 1.0)
    }
}

/// Evaluates `curve` at normalized depth `d`.
///
/// # Panics
///
/// If the curve has fewer than four coefficients or an invalid knot domain.
pub fn threshold_at(curve: &ThresholdCurve, d: f64) -> f64 {
    CurveEvaluator::new(curve)
        .expect("threshold curve must be valid")
        .threshold_at(d)
}
