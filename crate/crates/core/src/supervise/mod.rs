//! Training-time supervision artifacts: per-object loss weights and
//! depth-stratified loss masks.

mod gradient;
mod strat;
mod weighting;

pub use gradient::{effective_rates, strat_gradient_check, GradientCheck, SampleLoss, ToySample};
pub use strat::{
    build_strat_masks, quantile, resolve_cuts, stratified_loss, stratum_losses, CutMode,
    ImageLosses, LevelLoss, LevelStrata, StratConfig, StratMasks, StratNormalization,
};
pub use weighting::{
    ablation_weight, dlw_weight, object_weights, weighted_total_loss, DepthValue, HasDepth,
    ObjectDepth, ObjectLoss, WeightingMode,
};
