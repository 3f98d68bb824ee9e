//! Serialization helpers shared by checkpoints, datasets, and reports.

pub mod container;
pub mod hash;
