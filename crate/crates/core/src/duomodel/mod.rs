//! Dual-branch flow transformer: mirrored video and physics stacks with
//! adaptive-norm conditioning, coupled at selected depths by a pair of
//! cross-attention modules.

mod attention;
mod checkpoint;
mod config;
mod forward;
mod gradcheck;
mod params;
mod patch;

pub use attention::{phy_attention, vis_attention, AttentionWeights};
pub use checkpoint::{Checkpoint, OptimizerState};
pub use config::ModelConfig;
pub use forward::{timestep_features, ForwardItem, ForwardOut};
pub use gradcheck::{gradcheck_config, model_grad_check};
pub use params::{Bound, ModelParams, ParamEntry, Partition};
pub use patch::{force_tokens, patchify, unpatchify, VisTokenSeq};

use std::path::{Path, PathBuf};

use crate::diffengine::EngineError;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("patch {patch} does not divide {height}x{width}")]
    Divisibility {
        patch: usize,
        height: usize,
        width: usize,
    },
    #[error("{what}: expected width {expected}, got {got}")]
    Width {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{branch} branch has {count} tokens, limit {max}")]
    TokenOverflow {
        branch: &'static str,
        count: usize,
        max: usize,
    },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl ModelError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
