//! Dense numeric core: arrays, a reverse-mode autodiff tape, the Adam
//! optimizer, seeded initialization, finite-difference gradient checking
//! and the parameter archive format.

mod adam;
mod archive;
mod array;
mod gradcheck;
mod graph;
mod init;
mod params;
mod rng;

pub use adam::{sgd_step, AdamConfig, AdamState};
pub use archive::{Archive, ARCHIVE_MAGIC, ARCHIVE_VERSION};
pub use array::Array;
pub use gradcheck::{grad_check, Evaluation, GradCheckOptions, GradCheckReport};
pub use graph::{Bound, Gradients, Graph, Var};
pub use init::{init_params, InitKind, ParamSpec, INIT_GENERATOR};
pub use params::ParamSet;
pub use rng::{seeded_rng, split_seed};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NdiffError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("data length {len} does not match shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("backward requires a scalar root, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("no parameter named `{0}`")]
    MissingParam(String),
    #[error("archive error: {0}")]
    Archive(String),
}

#[cfg(test)]
mod tests;
