use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Record { line: usize, message: String },

    #[error("unknown sense id `{0}`")]
    SenseNotFound(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("class `{0}` is already registered")]
    ClassConflict(String),

    #[error("label `{0}` is not registered with the model")]
    UnregisteredLabel(String),

    #[error("model has no classes")]
    EmptyModel,

    #[error("numeric divergence: {0}")]
    Divergence(String),

    #[error("capacity {capacity} cannot give every one of {tasks} tasks a slot")]
    CapacityExhausted { capacity: usize, tasks: usize },

    #[error("metric is undefined: {0}")]
    UndefinedMetric(String),

    #[error("stream error: {0}")]
    Stream(String),

    #[error("unknown encoder descriptor `{0}`")]
    UnknownEncoder(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
