//! Joint video / physics-state generation with a dual-branch flow-matching
//! transformer, trained and scored against an exact 2D ball simulator.

pub mod ablation;
pub mod diffengine;
pub mod duomodel;
pub mod evalkit;
pub mod flowmatch;
pub mod physworld;
pub mod pipeline;
pub mod trainer;
