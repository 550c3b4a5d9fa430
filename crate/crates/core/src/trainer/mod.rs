//! Joint flow-matching training with a physics-loss weight that ramps up
//! and restarts on physics gradient spikes.

mod log;
mod loss;
mod schedule;
mod train;

pub use log::{parse_log, verify_alpha_trace, write_log, LossRecord, LOG_HEADER};
pub use loss::{grad_norm_physics, joint_loss, LossParts};
pub use schedule::{schedule_step, ScheduleConfig, ScheduleState};
pub use train::{apply_regime, batch_gradients, train_loop, train_loop_observed, Regime, TrainConfig, TrainOutcome};

use std::path::{Path, PathBuf};

use crate::diffengine::EngineError;
use crate::duomodel::ModelError;
use crate::flowmatch::FlowError;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("training set is empty")]
    EmptyDataset,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("batch has no non-conditioning tokens")]
    NoLossTokens,
    #[error("no gradient for trainable parameter {0}")]
    MissingGradient(String),
    #[error("non-finite loss at step {step}")]
    NonFinite { step: u64 },
    #[error("loss log: {0}")]
    Log(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl TrainError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
