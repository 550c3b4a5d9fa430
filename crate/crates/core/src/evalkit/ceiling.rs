use super::{motion_mask, mse, spatial_iou, spatiotemporal_iou, weighted_spatial_iou, EvalError, MetricsRecord};
use crate::physworld::{initial_state, render, simulate_from, DataConfig, FrameSeq, RecordSpec, WorldError};

pub const DEFAULT_TAU: f64 = 0.05;
/// Relative change of the initial velocities for the ceiling run.
pub const PERTURBATION: f64 = 0.01;

/// IoU family and MSE of `gen` against `reference`, both already cut to
/// the future frames. Physics fields are left at zero.
pub fn evaluate_frames(gen: &FrameSeq, reference: &FrameSeq, tau: f64) -> Result<MetricsRecord, EvalError> {
    let a = motion_mask(gen, tau)?;
    let b = motion_mask(reference, tau)?;
    Ok(MetricsRecord {
        spatial_iou: spatial_iou(&a, &b)?,
        spatiotemporal_iou: spatiotemporal_iou(&a, &b)?,
        weighted_spatial_iou: weighted_spatial_iou(&a, &b)?,
        mse: mse(gen, reference)?,
        ..Default::default()
    })
}

/// Metrics between the ground-truth clip of `spec` and a rerun whose
/// initial velocities are scaled by `1 + PERTURBATION`, over frames
/// `cond_frames..frames`.
pub fn perturbed_ceiling(
    spec: &RecordSpec,
    data: &DataConfig,
    cond_frames: usize,
    tau: f64,
) -> Result<MetricsRecord, EvalError> {
    let frames = data.frames;
    if cond_frames + 2 > frames {
        return Err(EvalError::TooShort(frames.saturating_sub(cond_frames)));
    }
    let init = initial_state(&spec.world)?;
    let bumped: Vec<_> = init
        .iter()
        .map(|b| {
            let mut b = *b;
            b.vx *= 1.0 + PERTURBATION;
            b.vy *= 1.0 + PERTURBATION;
            b
        })
        .collect();
    let (h, w) = spec.world.frame_shape();
    let run = |init: &[_]| -> Result<FrameSeq, WorldError> {
        let s = simulate_from(&spec.world, init, spec.force.as_ref(), frames)?;
        Ok(render(&s.states, h, w))
    };
    let gt = run(&init)?;
    let other = run(&bumped)?;
    evaluate_frames(&other.range(cond_frames, frames), &gt.range(cond_frames, frames), tau)
}
