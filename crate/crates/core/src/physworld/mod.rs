//! Deterministic 2D ball simulator, renderer, oracle physics encoder,
//! force tensors and the seeded clip dataset.

mod dataset;
mod latent;
mod pgm;
mod render;
pub mod scenario;
mod sim;
mod types;

use std::path::{Path, PathBuf};

pub use dataset::{
    decode_dataset, encode_dataset, generate, generate_record, latent_world, make_dataset,
    read_dataset, realize, record_spec, write_dataset, DataConfig, Dataset, DatasetHeader, Record,
    RecordSpec, FLAG_FORCE_CHANNEL, MAGIC, VERSION,
};
pub use latent::{
    decode_physics, encode_physics, LatentScale, OracleEncoder, PhysLatentSeq, PhysicsEncoder,
};
pub use pgm::{encode_pgm, export_pgm_frames};
pub use render::{render, render_force_tensor, render_frame, FORCE_SIGMA};
pub use scenario::{ScenarioDescriptor, DESCRIPTOR_LEN, DESCRIPTOR_VOCAB, FORCE_SLOTS, SHARED_SLOTS};
pub use sim::{initial_state, simulate, simulate_from, Impact, Simulation, Wall, FORCE_REACH};
pub use types::{
    BallState, ForceEvent, FrameSeq, PhysStateSeq, WorldConfig, FIELDS_PER_BALL, MAX_BALLS,
};

#[derive(Debug, thiserror::Error)]
pub enum WorldError {
    #[error("invalid world configuration: {0}")]
    InvalidConfig(String),
    #[error("initial balls overlap")]
    Overlap,
    #[error("malformed dataset: {0}")]
    Format(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl WorldError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
