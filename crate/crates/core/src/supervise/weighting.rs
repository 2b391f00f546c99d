use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `1 + alpha * exp(d_norm)`.
#[inline]
pub fn dlw_weight(d_norm: f64, alpha: f64) -> f64 {
    1.0 + alpha * d_norm.exp()
}

/// Per-object weighting scheme: the exponential DLW rule and its ablations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tag", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum WeightingMode {
    Dlw {
        alpha: f64,
    },
    /// Raw estimator output (inverse depth, so far objects get less weight).
    RawD,
    /// `1 - d_norm`: normalized but not inverted to distance.
    InvOnly,
    /// `exp(1 - d_norm)`.
    ExpNoinv,
    /// `d_norm`.
    Linear,
    /// `d_norm^2`.
    Quadratic,
    /// DLW rule on the batch-mean object depth; one weight per batch.
    Bw {
        alpha: f64,
    },
    /// DLW rule on the image-mean object depth; one weight per image.
    Iw {
        alpha: f64,
    },
}

impl Default for WeightingMode {
    fn default() -> Self {
        WeightingMode::Dlw { alpha: 1.0 }
    }
}

impl WeightingMode {
    pub fn validate(&self) -> Result<()> {
        match *self {
            WeightingMode::Dlw { alpha }
            | WeightingMode::Bw { alpha }
            | WeightingMode::Iw { alpha }
                if !(alpha > 0.0 && alpha.is_finite()) =>
            {
                Err(Error::domain(format!(
                    "alpha must be positive, got {alpha}"
                )))
            }
            _ => Ok(()),
        }
    }
}

/// Either a raw estimator value or an inverted normalized depth in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DepthValue {
    Raw(f64),
    Normalized(f64),
}

/// Weight for one depth value under `mode`.
///
/// For `Bw` / `Iw` the value passed must already be the group mean.
pub fn ablation_weight(value: DepthValue, mode: &WeightingMode) -> Result<f64> {
    mode.validate()?;
    match (mode, value) {
        (WeightingMode::RawD, DepthValue::Raw(d)) if d.is_finite() => Ok(d),
        (WeightingMode::RawD, v) => Err(Error::domain(format!(
            "RAW_D weighting needs a raw depth value, got {v:?}"
        ))),
        (_, DepthValue::Raw(_)) => Err(Error::domain(format!(
            "{mode:?} weighting needs a normalized depth, got a raw value"
        ))),
        (_, DepthValue::Normalized(d)) if !(0.0..=1.0).contains(&d) => {
            Err(Error::domain(format!("normalized depth {d} outside [0,1]")))
        }
        (mode, DepthValue::Normalized(d)) => Ok(match *mode {
            WeightingMode::Dlw { alpha }
            | WeightingMode::Bw { alpha }
            | WeightingMode::Iw { alpha } => dlw_weight(d, alpha),
            WeightingMode::InvOnly => 1.0 - d,
            WeightingMode::ExpNoinv => (1.0 - d).exp(),
            WeightingMode::Linear => d,
            WeightingMode::Quadratic => d * d,
            WeightingMode::RawD => unreachable!(),
        }),
    }
}

/// Anything that carries an object's depth.
pub trait HasDepth {
    fn image_id(&self) -> &str;
    fn depth_norm(&self) -> f64;
    fn depth_raw(&self) -> Option<f64>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectDepth {
    pub image_id: String,
    pub depth_norm: f64,
    /// Mean raw estimator value over the object box; needed only by `RawD`.
    pub depth_raw: Option<f64>,
}

/// Per-object classification and box losses as produced by a detector.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectLoss {
    pub image_id: String,
    pub object_index: usize,
    pub cls_loss: f64,
    pub box_loss: f64,
    pub depth_norm: f64,
    pub depth_raw: Option<f64>,
}

impl HasDepth for ObjectDepth {
    fn image_id(&self) -> &str {
        &self.image_id
    }
    fn depth_norm(&self) -> f64 {
        self.depth_norm
    }
    fn depth_raw(&self) -> Option<f64> {
        self.depth_raw
    }
}

impl HasDepth for ObjectLoss {
    fn image_id(&self) -> &str {
        &self.image_id
    }
    fn depth_norm(&self) -> f64 {
        self.depth_norm
    }
    fn depth_raw(&self) -> Option<f64> {
        self.depth_raw
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

/// Weights for every object of one batch under `mode`.
pub fn object_weights<T: HasDepth>(objects: &[T], mode: &WeightingMode) -> Result<Vec<f64>> {
    mode.validate()?;
    match *mode {
        WeightingMode::Bw { .. } => {
            if objects.is_empty() {
                return Ok(Vec::new());
            }
            let m = mean(objects.iter().map(HasDepth::depth_norm));
            let w = ablation_weight(DepthValue::Normalized(m), mode)?;
            Ok(vec![w; objects.len()])
        }
        WeightingMode::Iw { .. } => {
            let mut groups: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
            for o in objects {
                let g = groups.entry(o.image_id()).or_default();
                g.0 += o.depth_norm();
                g.1 += 1;
            }
            objects
                .iter()
                .map(|o| {
                    let (s, n) = groups[o.image_id()];
                    ablation_weight(DepthValue::Normalized(s / n as f64), mode)
                })
                .collect()
        }
        WeightingMode::RawD => objects
            .iter()
            .map(|o| {
                let raw = o.depth_raw().ok_or_else(|| {
                    Error::domain(format!(
                        "RAW_D weighting needs a raw depth for object in image {:?}",
                        o.image_id()
                    ))
                })?;
                ablation_weight(DepthValue::Raw(raw), mode)
            })
            .collect(),
        _ => objects
            .iter()
            .map(|o| ablation_weight(DepthValue::Normalized(o.depth_norm()), mode))
            .collect(),
    }
}

/// `(1 / N_b) * sum_i w_i * (cls_i + box_i)` over one batch.
pub fn weighted_total_loss(losses: &[ObjectLoss], mode: &WeightingMode) -> Result<f64> {
    if losses.is_empty() {
        return Err(Error::domain("weighted loss needs at least one object"));
    }
    if let Some(o) = losses.iter().find(|o| {
        !(o.cls_loss.is_finite()
            && o.box_loss.is_finite()
            && o.cls_loss >= 0.0
            && o.box_loss >= 0.0)
    }) {
        return Err(Error::domain(format!(
            "object {} in image {:?} has invalid losses ({}, {})",
            o.object_index, o.image_id, o.cls_loss, o.box_loss
        )));
    }
    let weights = object_weights(losses, mode)?;
    let total: f64 = losses
        .iter()
        .zip(&weights)
        .map(|(o, w)| w * (o.cls_loss + o.box_loss))
        .sum();
    Ok(total / losses.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn obj(image: &str, d: f64, cls: f64, bx: f64) -> ObjectLoss {
        ObjectLoss {
            image_id: image.into(),
            object_index: 0,
            cls_loss: cls,
            box_loss: bx,
            depth_norm: d,
            depth_raw: None,
        }
    }

    #[test]
    fn dlw_examples() {
        assert_eq!(dlw_weight(0.0, 1.0), 2.0);
        assert_abs_diff_eq!(dlw_weight(0.5, 1.0), 2.648_721_270_700_128, epsilon = 1e-12);
        let ratio = |a: f64| dlw_weight(1.0, a) / dlw_weight(0.0, a);
        assert_abs_diff_eq!(ratio(0.1), 1.156, epsilon = 5e-4);
        assert_abs_diff_eq!(ratio(10.0), 2.562, epsilon = 5e-4);
    }

    #[test]
    fn ablation_modes() {
        let n = DepthValue::Normalized;
        assert_eq!(
            ablation_weight(n(0.3), &WeightingMode::Linear).unwrap(),
            0.3
        );
        assert_eq!(
            ablation_weight(n(0.5), &WeightingMode::Quadratic).unwrap(),
            0.25
        );
        assert_eq!(
            ablation_weight(n(0.25), &WeightingMode::InvOnly).unwrap(),
            0.75
        );
        assert_abs_diff_eq!(
            ablation_weight(n(0.25), &WeightingMode::ExpNoinv).unwrap(),
            0.75f64.exp()
        );
        assert_eq!(
            ablation_weight(DepthValue::Raw(7.5), &WeightingMode::RawD).unwrap(),
            7.5
        );
    }

    #[test]
    fn mode_domain_mismatch() {
        assert!(ablation_weight(DepthValue::Normalized(0.5), &WeightingMode::RawD).is_err());
        assert!(ablation_weight(DepthValue::Raw(0.5), &WeightingMode::Linear).is_err());
        assert!(ablation_weight(DepthValue::Normalized(1.5), &WeightingMode::Linear).is_err());
        assert!(ablation_weight(
            DepthValue::Normalized(0.5),
            &WeightingMode::Dlw { alpha: 0.0 }
        )
        .is_err());
    }

    #[test]
    fn batch_and_image_weights_use_group_means() {
        let objs = vec![
            obj("a", 0.2, 1.0, 0.0),
            obj("a", 0.4, 1.0, 0.0),
            obj("b", 0.9, 1.0, 0.0),
        ];
        let bw = object_weights(&objs, &WeightingMode::Bw { alpha: 1.0 }).unwrap();
        assert!(bw.iter().all(|&w| w == bw[0]));
        assert_abs_diff_eq!(bw[0], 1.0 + 0.5f64.exp(), epsilon = 1e-12);
        let iw = object_weights(&objs, &WeightingMode::Iw { alpha: 1.0 }).unwrap();
        assert_abs_diff_eq!(iw[0], 1.0 + 0.3f64.exp(), epsilon = 1e-12);
        assert_eq!(iw[0], iw[1]);
        assert_abs_diff_eq!(iw[2], 1.0 + 0.9f64.exp(), epsilon = 1e-12);
    }

    #[test]
    fn raw_mode_requires_raw_depth() {
        let objs = vec![obj("a", 0.2, 1.0, 0.0)];
        assert!(object_weights(&objs, &WeightingMode::RawD).is_err());
    }

    #[test]
    fn weighted_loss_examples() {
        let one = [obj("a", 0.0, 1.0, 1.0)];
        assert_eq!(
            weighted_total_loss(&one, &WeightingMode::Dlw { alpha: 1.0 }).unwrap(),
            4.0
        );
        let flat = [obj("a", 1.0, 1.0, 2.0), obj("b", 1.0, 0.5, 0.5)];
        assert_eq!(
            weighted_total_loss(&flat, &WeightingMode::Linear).unwrap(),
            2.0
        );
        assert!(weighted_total_loss(&[], &WeightingMode::Linear).is_err());
        assert!(weighted_total_loss(&[obj("a", 0.1, -1.0, 0.0)], &WeightingMode::Linear).is_err());
    }

    #[test]
    fn weight_bounds() {
        for alpha in [0.1, 1.0, 10.0] {
            for i in 0..=100 {
                let w = dlw_weight(i as f64 / 100.0, alpha);
                assert!(w >= 1.0 + alpha - 1e-12 && w <= 1.0 + alpha * std::f64::consts::E + 1e-12);
            }
        }
    }
}
