//! Motion-mask IoU family, pixel MSE, the ceiling-normalised aggregate
//! score, and simulator-state trajectory metrics.

mod ceiling;
mod masks;
mod physics;
mod score;

pub use ceiling::{evaluate_frames, perturbed_ceiling, DEFAULT_TAU, PERTURBATION};
pub use masks::{motion_mask, mse, spatial_iou, spatiotemporal_iou, weighted_spatial_iou, MaskSeq};
pub use physics::{bounce_timing_error, trajectory_rmse};
pub use score::{physics_iq_score, write_metrics_csv, MetricsRecord, METRICS_HEADER};

use crate::physworld::WorldError;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("dimension mismatch: {0}")]
    Dimensions(String),
    #[error("motion masks need at least 2 frames, got {0}")]
    TooShort(usize),
    #[error("threshold {0} outside (0, 1)")]
    Threshold(f64),
    #[error(transparent)]
    World(#[from] WorldError),
}
