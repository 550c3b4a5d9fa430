//! Dense `f64` tensors, a per-step reverse-mode tape, finite-difference
//! gradient checking and the AdamW optimizer.

mod gradcheck;
mod graph;
mod optim;
mod suite;
mod tensor;

pub use gradcheck::grad_check;
pub use graph::{Gradients, Graph, Var};
pub use optim::{adamw_step, clip_global_norm, global_norm, LrSchedule, Moments, OptimizerConfig};
pub use suite::{primitive_grad_errors, primitive_names};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EngineError {
    #[error("invalid shape {0:?}")]
    InvalidShape(Vec<usize>),
    #[error("shape {shape:?} does not hold {len} values")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{0}")]
    InvalidArgument(&'static str),
    #[error("non-finite input to {0}")]
    NonFinite(&'static str),
    #[error("loss must be scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("function is not deterministic: {first} vs {second}")]
    NonDeterministic { first: f64, second: f64 },
}
