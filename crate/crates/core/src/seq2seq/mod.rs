//! Encoder-aligner-decoder model: a (bi)directional LSTM over the
//! instruction, an attention aligner over words and annotations, and an
//! LSTM decoder with a deep output layer over the four actions.

mod config;
mod model;
pub mod net;

pub use config::{AlignerMode, ModelConfig, Variant};
pub use model::{AlignmentTrace, DecoderState, EncodedSentence, Rollout, Seq2Seq, StepOutput};

use thiserror::Error;

use crate::ndiff::NdiffError;
use crate::worldsim::WorldError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Numeric(#[from] NdiffError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}
