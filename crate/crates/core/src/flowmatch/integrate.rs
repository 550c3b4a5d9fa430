use serde::{Deserialize, Serialize};

use super::FlowError;
use crate::diffengine::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Sampler {
    #[default]
    Euler,
    Heun,
}

/// Video and physics latents advanced together.
#[derive(Clone, Debug, PartialEq)]
pub struct JointLatent {
    pub video: Tensor,
    pub physics: Tensor,
}

/// Clean values and masks for tokens held fixed during sampling.
#[derive(Clone, Debug, PartialEq)]
pub struct Conditioning {
    pub video: Tensor,
    pub video_mask: Vec<bool>,
    pub physics: Tensor,
    pub physics_mask: Vec<bool>,
}

impl Conditioning {
    /// No token is held fixed.
    pub fn none(like: &JointLatent) -> Self {
        Self {
            video: like.video.clone(),
            video_mask: vec![false; like.video.rows()],
            physics: like.physics.clone(),
            physics_mask: vec![false; like.physics.rows()],
        }
    }

    fn impose(&self, x: &mut JointLatent) {
        for (r, _) in self.video_mask.iter().enumerate().filter(|(_, &m)| m) {
            x.video.row_slice_mut(r).copy_from_slice(self.video.row_slice(r));
        }
        for (r, _) in self.physics_mask.iter().enumerate().filter(|(_, &m)| m) {
            x.physics.row_slice_mut(r).copy_from_slice(self.physics.row_slice(r));
        }
    }

    fn times(&self, t: f64) -> TokenTimes {
        let f = |mask: &[bool]| mask.iter().map(|&m| if m { 0.0 } else { t }).collect();
        TokenTimes {
            t,
            video: f(&self.video_mask),
            physics: f(&self.physics_mask),
        }
    }
}

/// Per-token flow time handed to the velocity field; conditioning tokens sit
/// at 0.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenTimes {
    pub t: f64,
    pub video: Vec<f64>,
    pub physics: Vec<f64>,
}

fn axpy(x: &mut Tensor, a: f64, u: &Tensor) {
    for (xi, ui) in x.data_mut().iter_mut().zip(u.data()) {
        *xi += a * ui;
    }
}

fn finite(x: &JointLatent) -> bool {
    x.video.is_finite() && x.physics.is_finite()
}

/// Integrates the velocity field from noise (`t = 1`) to data (`t = 0`) on a
/// uniform grid of `steps` intervals. Conditioning rows are imposed before
/// the first evaluation and after every step.
pub fn integrate<F>(
    mut field: F,
    init: JointLatent,
    cond: &Conditioning,
    steps: usize,
    method: Sampler,
) -> Result<JointLatent, FlowError>
where
    F: FnMut(&JointLatent, &TokenTimes) -> Result<JointLatent, FlowError>,
{
    if steps == 0 {
        return Err(FlowError::NoSteps);
    }
    if init.video.shape() != cond.video.shape() || init.physics.shape() != cond.physics.shape() {
        return Err(FlowError::ShapeMismatch {
            data: cond.video.shape().to_vec(),
            noise: init.video.shape().to_vec(),
        });
    }
    let mut x = init;
    cond.impose(&mut x);
    let dt = 1.0 / steps as f64;
    for i in 0..steps {
        let t = 1.0 - i as f64 / steps as f64;
        let t_next = 1.0 - (i + 1) as f64 / steps as f64;
        let k1 = field(&x, &cond.times(t))?;
        match method {
            Sampler::Euler => {
                axpy(&mut x.video, dt, &k1.video);
                axpy(&mut x.physics, dt, &k1.physics);
            }
            Sampler::Heun => {
                let mut pred = x.clone();
                axpy(&mut pred.video, dt, &k1.video);
                axpy(&mut pred.physics, dt, &k1.physics);
                cond.impose(&mut pred);
                let k2 = field(&pred, &cond.times(t_next))?;
                axpy(&mut x.video, 0.5 * dt, &k1.video);
                axpy(&mut x.video, 0.5 * dt, &k2.video);
                axpy(&mut x.physics, 0.5 * dt, &k1.physics);
                axpy(&mut x.physics, 0.5 * dt, &k2.physics);
            }
        }
        cond.impose(&mut x);
        if !finite(&x) {
            return Err(FlowError::NonFinite { step: i });
        }
    }
    Ok(x)
}
