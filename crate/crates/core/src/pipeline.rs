//! Glue between the simulator, the model and the metrics: dataset records
//! to latent clips, conditional sampling, and per-clip evaluation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::diffengine::Tensor;
use crate::duomodel::{force_tokens, patchify, unpatchify, ForwardItem, ModelError, ModelParams, VisTokenSeq};
use crate::evalkit::{
    bounce_timing_error, evaluate_frames, perturbed_ceiling, physics_iq_score, trajectory_rmse, EvalError, MetricsRecord,
};
use crate::flowmatch::{integrate, Conditioning, FlowError, JointLatent, LatentClip, Sampler};
use crate::physworld::{
    decode_physics, encode_physics, latent_world, realize, record_spec, DataConfig, Dataset, FrameSeq, PhysStateSeq,
    Record, WorldConfig, WorldError,
};
use crate::trainer::TrainError;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("{0}")]
    Invalid(String),
}

/// Latent clip for one record: patchified frames, oracle-encoded states
/// normalised against `world`, and pooled force tokens when the record
/// carries a force.
pub fn clip_from_record(record: &Record, world: &WorldConfig, patch: usize) -> Result<LatentClip, PipelineError> {
    let video = patchify(&record.frames, patch)?;
    let tokens_per_frame = video.tokens_per_frame();
    let physics = encode_physics(&record.states, &latent_world(world)).values;
    let force = match (&record.force_frames, record.descriptor.has_force()) {
        (Some(f), true) => Some(force_tokens(f, patch)?),
        _ => None,
    };
    Ok(LatentClip {
        video: video.tokens,
        tokens_per_frame,
        physics,
        context: record.descriptor,
        force,
    })
}

pub fn clips_from_dataset(ds: &Dataset, world: &WorldConfig, patch: usize) -> Result<Vec<LatentClip>, PipelineError> {
    ds.records.iter().map(|r| clip_from_record(r, world, patch)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleConfig {
    pub steps: usize,
    pub sampler: Sampler,
    /// Leading frames copied from the reference clip and held fixed.
    pub cond_frames: usize,
    pub seed: u64,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            steps: 32,
            sampler: Sampler::Euler,
            cond_frames: 0,
            seed: 0,
        }
    }
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect()).expect("shape")
}

/// Integrates the model's joint velocity from Gaussian noise, holding the
/// first `cond_frames` frames of `clip` fixed. Context and force tokens come
/// from `clip` as well.
pub fn sample_clip(params: &ModelParams, clip: &LatentClip, cfg: &SampleConfig) -> Result<JointLatent, PipelineError> {
    let frames = clip.frames();
    if cfg.cond_frames >= frames {
        return Err(FlowError::TooManyCondFrames {
            k: cfg.cond_frames,
            frames,
        }
        .into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init = JointLatent {
        video: gaussian(&mut rng, clip.video.rows(), clip.video.cols()),
        physics: gaussian(&mut rng, frames, clip.physics.cols()),
    };
    let cond = Conditioning {
        video: clip.video.clone(),
        video_mask: (0..clip.video.rows()).map(|i| i / clip.tokens_per_frame < cfg.cond_frames).collect(),
        physics: clip.physics.clone(),
        physics_mask: (0..frames).map(|f| f < cfg.cond_frames).collect(),
    };
    let field = |x: &JointLatent, times: &crate::flowmatch::TokenTimes| {
        let item = ForwardItem {
            video: &x.video,
            physics: &x.physics,
            video_time: &times.video,
            physics_time: &times.physics,
            context: &clip.context,
            force: clip.force.as_ref(),
        };
        let (video, physics) = params
            .predict(&[item])
            .map_err(|e| FlowError::Field(e.to_string()))?
            .remove(0);
        Ok(JointLatent { video, physics })
    };
    Ok(integrate(field, init, &cond, cfg.steps, cfg.sampler)?)
}

/// Frames and simulator states decoded from a joint latent.
pub fn decode_sample(
    latent: &JointLatent,
    world: &WorldConfig,
    patch: usize,
) -> Result<(FrameSeq, PhysStateSeq), PipelineError> {
    let (h, w) = world.frame_shape();
    let frames = latent.physics.rows();
    let seq = VisTokenSeq {
        tokens: latent.video.clone(),
        frames,
        height: h,
        width: w,
        patch,
    };
    let video = unpatchify(&seq)?;
    let states = decode_physics(&latent.physics, &latent_world(world));
    Ok((video, states))
}

fn future_states(s: &PhysStateSeq, k: usize) -> Result<PhysStateSeq, PipelineError> {
    Ok(PhysStateSeq::new(s.frames()[k..].to_vec(), None)?)
}

/// Metrics of a generated clip against its ground truth over frames
/// `cond_frames..T`. `ceiling` feeds the aggregate score.
pub fn evaluate_sample(
    gen_frames: &FrameSeq,
    gen_states: &PhysStateSeq,
    gt: &Record,
    cond_frames: usize,
    tau: f64,
    ceiling: &MetricsRecord,
) -> Result<MetricsRecord, PipelineError> {
    let t = gt.frames.len();
    if gen_frames.len() != t || gen_states.len() != t || cond_frames + 2 > t {
        return Err(PipelineError::Invalid(format!(
            "cannot evaluate {} generated frames against {t} with {cond_frames} conditioning frames",
            gen_frames.len()
        )));
    }
    let mut m = evaluate_frames(&gen_frames.range(cond_frames, t), &gt.frames.range(cond_frames, t), tau)?;
    m.physics_iq = physics_iq_score(&m, ceiling);
    let (a, b) = (future_states(gen_states, cond_frames)?, future_states(&gt.states, cond_frames)?);
    m.bounce_timing_error = bounce_timing_error(&a, &b, gt.frames.height())? as f64;
    m.trajectory_rmse = trajectory_rmse(&a, &b)?;
    Ok(m)
}

/// Regenerates held-out clip `index` of `data`, samples it with the first
/// `cfg.cond_frames` frames fixed (noise seed `cfg.seed + index`) and scores
/// the future frames against the clip's perturbed-rerun ceiling.
pub fn evaluate_heldout_clip(
    params: &ModelParams,
    world: &WorldConfig,
    data: &DataConfig,
    index: usize,
    cfg: &SampleConfig,
    tau: f64,
) -> Result<MetricsRecord, PipelineError> {
    let patch = params.config().patch;
    let spec = record_spec(world, data, index)?;
    let record = realize(&spec, data.frames, world.balls, data)?;
    let clip = clip_from_record(&record, world, patch)?;
    let ceiling = perturbed_ceiling(&spec, data, cfg.cond_frames, tau)?;
    let per_clip = SampleConfig {
        seed: cfg.seed.wrapping_add(index as u64),
        ..cfg.clone()
    };
    let latent = sample_clip(params, &clip, &per_clip)?;
    let (frames, states) = decode_sample(&latent, world, patch)?;
    evaluate_sample(&frames, &states, &record, cfg.cond_frames, tau, &ceiling)
}
