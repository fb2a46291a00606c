use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch {shapes:?}")]
    ShapeMismatch {
        op: &'static str,
        shapes: Vec<Vec<usize>>,
    },
    #[error("{op}: {reason}")]
    InvalidOperand { op: &'static str, reason: String },
    #[error("unknown primitive kind `{0}`")]
    UnknownPrimitive(String),
    #[error("loss must be scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("duplicate parameter `{0}`")]
    DuplicateParameter(String),
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("duplicate task `{0}`")]
    DuplicateTask(String),
    #[error("unknown task kind `{0}`")]
    UnknownTaskKind(String),
    #[error("task `{task}`: label {label} outside 0..{classes}")]
    LabelOutOfRange {
        task: String,
        label: usize,
        classes: usize,
    },
    #[error("invalid subtask for `{task}`: {reason}")]
    InvalidSubtask { task: String, reason: String },
    #[error("world construction failed: {0}")]
    World(String),
    #[error("config field `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error("{0}")]
    Scheduler(String),
    #[error("checkpoint rejected: {0}")]
    Checkpoint(String),
    #[error("metrics: {0}")]
    Metrics(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn invalid(op: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidOperand {
            op,
            reason: reason.into(),
        }
    }
}
