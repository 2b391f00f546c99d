//! Depth priors for 2D object detection: depth-based loss weighting and
//! stratification for training, and depth-aware confidence thresholds for
//! post-processing, with the evaluation and simulation tooling around them.

// `!(a < b)` is used on purpose so NaN lands on the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dct;
pub mod depthnorm;
pub mod error;
pub mod hetsim;
pub mod io;
pub mod matching;
pub mod spline;
pub mod supervise;
pub mod synth;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    BBox, DepthMap, Detection, GroundTruthBox, LookupTable, NormalizedDepthMap, ThresholdCurve,
};
