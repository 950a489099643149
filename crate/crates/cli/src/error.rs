use std::fmt;

use walklab::corpus::CorpusError;
use walklab::eval::EvalError;
use walklab::inference::InferenceError;
use walklab::seq2seq::ModelError;
use walklab::trainer::TrainError;

/// Failure classes with their process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    /// Bad flags, paths or arguments.
    User = 1,
    /// Corrupt or inconsistent data and checkpoints.
    Data = 2,
    /// Training diverged.
    Numeric = 3,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

impl CliError {
    pub fn user(message: impl Into<String>) -> Self {
        Self {
            kind: Kind::User,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            kind: Kind::Data,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.kind as i32
    }

    fn of(kind: Kind, err: impl fmt::Display) -> Self {
        Self {
            kind,
            message: err.to_string(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::of(Kind::User, e)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::of(Kind::Data, e)
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        let kind = match e {
            CorpusError::Io(_) => Kind::User,
            _ => Kind::Data,
        };
        Self::of(kind, e)
    }
}

fn model_kind(e: &ModelError) -> Kind {
    match e {
        ModelError::Config(_) | ModelError::Contract(_) | ModelError::Io(_) => Kind::User,
        ModelError::Checkpoint(_) | ModelError::World(_) => Kind::Data,
        ModelError::Numeric(_) => Kind::Numeric,
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        Self::of(model_kind(&e), e)
    }
}

fn inference_kind(e: &InferenceError) -> Kind {
    match e {
        InferenceError::Ensemble(_) => Kind::Data,
        InferenceError::Model(m) => model_kind(m),
    }
}

impl From<InferenceError> for CliError {
    fn from(e: InferenceError) -> Self {
        Self::of(inference_kind(&e), e)
    }
}

fn train_kind(e: &TrainError) -> Kind {
    match e.root() {
        TrainError::Config(_) => Kind::User,
        TrainError::NonFinite { .. } | TrainError::Numeric(_) => Kind::Numeric,
        TrainError::UnknownMap { .. } | TrainError::Ensemble { .. } => Kind::Data,
        TrainError::Model(m) => model_kind(m),
        TrainError::Inference(i) => inference_kind(i),
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        Self::of(train_kind(&e), e)
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        let kind = match &e {
            EvalError::Contract(_) | EvalError::Infeasible { .. } => Kind::User,
            EvalError::UnknownMap(_) | EvalError::Corpus(_) => Kind::Data,
            EvalError::Inference(i) => inference_kind(i),
            EvalError::Train(t) => train_kind(t),
        };
        Self::of(kind, e)
    }
}
