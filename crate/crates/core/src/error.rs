use thiserror::Error;

/// Errors raised anywhere in the navigation stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("parameter `{0}` is already registered")]
    DuplicateParameter(String),

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("token id {token} is outside the vocabulary of size {vocab}")]
    OutOfVocabulary { token: usize, vocab: usize },

    #[error("unknown word `{0}`")]
    UnknownWord(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("infeasible configuration: {0}")]
    Infeasible(String),

    #[error("placement failed, map must be regenerated")]
    RegenerateMap,

    #[error("session already terminated")]
    SessionTerminated,

    #[error("unknown object class {0}")]
    UnknownClass(usize),

    #[error("grammar error: {0}")]
    Grammar(String),

    #[error("inconsistent scene: {0}")]
    Scene(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("replay mismatch at step {step}: expected hash {expected}, got {actual}")]
    ReplayMismatch {
        step: usize,
        expected: String,
        actual: String,
    },

    #[error("worker {0} failed during collection")]
    WorkerFailed(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn shape_err(op: &'static str, detail: impl Into<String>) -> Error {
    Error::Shape {
        op,
        detail: detail.into(),
    }
}
