use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{sample_path, target_velocity, FlowError, FlowTime};
use crate::diffengine::Tensor;
use crate::physworld::ScenarioDescriptor;

/// One clip in latent space: frame-major video tokens, one physics token per
/// frame and optional force tokens (always conditioning, never noised).
#[derive(Clone, Debug, PartialEq)]
pub struct LatentClip {
    /// `T·P × token_dim`, the `P` tokens of frame 0 first.
    pub video: Tensor,
    pub tokens_per_frame: usize,
    /// `T × D_z`.
    pub physics: Tensor,
    pub context: ScenarioDescriptor,
    pub force: Option<Tensor>,
}

impl LatentClip {
    pub fn frames(&self) -> usize {
        self.physics.rows()
    }
}

/// One noised training item.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowSample {
    pub video: Tensor,
    pub physics: Tensor,
    pub video_time: Vec<f64>,
    pub physics_time: Vec<f64>,
    /// Velocity targets; rows under the conditioning mask are zero and carry
    /// no loss.
    pub video_target: Tensor,
    pub physics_target: Tensor,
    pub video_cond: Vec<bool>,
    pub physics_cond: Vec<bool>,
    pub cond_frames: usize,
    pub t: f64,
    pub context: ScenarioDescriptor,
    pub force: Option<Tensor>,
}

/// How many leading frames condition each training clip.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CondPolicy {
    /// Probability of no conditioning frames at all.
    pub none_prob: f64,
    /// Upper bound on `k` when conditioning; `None` means `T/3`.
    pub k_max: Option<usize>,
}

impl Default for CondPolicy {
    fn default() -> Self {
        Self {
            none_prob: 0.5,
            k_max: None,
        }
    }
}

impl CondPolicy {
    pub fn draw<R: Rng>(&self, frames: usize, rng: &mut R) -> usize {
        let roll: f64 = rng.random();
        if roll < self.none_prob || frames < 2 {
            return 0;
        }
        let k_max = self.k_max.unwrap_or(frames / 3).clamp(1, frames - 1);
        rng.random_range(1..=k_max)
    }
}

fn gaussian<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    Tensor::matrix(rows, cols, data).expect("positive extents")
}

/// Builds one [`FlowSample`] per clip with `cond_frames[i]` leading frames
/// kept clean at time 0. Per clip the draws are: `t ~ U[0,1)`, then video
/// noise, then physics noise, all from `rng`.
pub fn make_training_batch<R: Rng>(
    clips: &[&LatentClip],
    cond_frames: &[usize],
    rng: &mut R,
) -> Result<Vec<FlowSample>, FlowError> {
    if clips.is_empty() {
        return Err(FlowError::EmptyBatch);
    }
    if clips.len() != cond_frames.len() {
        return Err(FlowError::BatchLength {
            clips: clips.len(),
            counts: cond_frames.len(),
        });
    }
    clips
        .iter()
        .zip(cond_frames)
        .map(|(clip, &k)| noise_clip(clip, k, rng))
        .collect()
}

fn mask_rows(t: &mut Tensor, mask: &[bool], source: Option<&Tensor>) {
    for (r, &m) in mask.iter().enumerate() {
        if m {
            match source {
                Some(s) => t.row_slice_mut(r).copy_from_slice(s.row_slice(r)),
                None => t.row_slice_mut(r).fill(0.0),
            }
        }
    }
}

pub fn noise_clip<R: Rng>(clip: &LatentClip, k: usize, rng: &mut R) -> Result<FlowSample, FlowError> {
    let frames = clip.frames();
    if k >= frames {
        return Err(FlowError::TooManyCondFrames { k, frames });
    }
    let t = FlowTime::new(rng.random::<f64>())?;
    let nv = clip.video.rows();
    let x0_v = gaussian(nv, clip.video.cols(), rng);
    let x0_z = gaussian(frames, clip.physics.cols(), rng);

    let video_cond: Vec<bool> = (0..nv).map(|i| i / clip.tokens_per_frame < k).collect();
    let physics_cond: Vec<bool> = (0..frames).map(|f| f < k).collect();

    let mut video = sample_path(&clip.video, &x0_v, t)?;
    let mut physics = sample_path(&clip.physics, &x0_z, t)?;
    mask_rows(&mut video, &video_cond, Some(&clip.video));
    mask_rows(&mut physics, &physics_cond, Some(&clip.physics));

    let mut video_target = target_velocity(&clip.video, &x0_v)?;
    let mut physics_target = target_velocity(&clip.physics, &x0_z)?;
    mask_rows(&mut video_target, &video_cond, None);
    mask_rows(&mut physics_target, &physics_cond, None);

    let time = |cond: &[bool]| cond.iter().map(|&c| if c { 0.0 } else { t.value() }).collect();
    Ok(FlowSample {
        video_time: time(&video_cond),
        physics_time: time(&physics_cond),
        video,
        physics,
        video_target,
        physics_target,
        video_cond,
        physics_cond,
        cond_frames: k,
        t: t.value(),
        context: clip.context,
        force: clip.force.clone(),
    })
}
