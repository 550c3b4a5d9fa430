//! Rectified-flow paths, training batches and the sampler ODE.

mod batch;
mod integrate;
mod path;

pub use batch::{make_training_batch, noise_clip, CondPolicy, FlowSample, LatentClip};
pub use integrate::{integrate, Conditioning, JointLatent, Sampler, TokenTimes};
pub use path::{sample_path, target_velocity, FlowTime};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("flow time {0} outside [0, 1]")]
    TimeOutOfRange(f64),
    #[error("data shape {data:?} does not match noise shape {noise:?}")]
    ShapeMismatch { data: Vec<usize>, noise: Vec<usize> },
    #[error("empty batch")]
    EmptyBatch,
    #[error("{clips} clips but {counts} conditioning counts")]
    BatchLength { clips: usize, counts: usize },
    #[error("{k} conditioning frames leave nothing to generate in a {frames}-frame clip")]
    TooManyCondFrames { k: usize, frames: usize },
    #[error("sampler needs at least one step")]
    NoSteps,
    #[error("non-finite latent after step {step}")]
    NonFinite { step: usize },
    #[error("velocity field failed: {0}")]
    Field(String),
}
