use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Record { line: usize, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient {source_name} documents: need {required}, have {available} (short by {})", required - available)]
    InsufficientDocuments {
        source_name: &'static str,
        required: usize,
        available: usize,
    },

    #[error("unrecognized prior file")]
    UnrecognizedPrior,

    #[error("unsupported prior file version {found} (expected {expected})")]
    PriorVersion { found: String, expected: String },

    #[error("malformed prior file: {0}")]
    MalformedPrior(String),

    #[error("transport error talking to {endpoint}: {message}")]
    Transport { endpoint: String, message: String },

    #[error("conformance violation [{rule}]: {detail}")]
    Conformance { rule: &'static str, detail: String },

    #[error("model error: {0}")]
    Model(String),

    #[error("edit plan does not match sequence: {0}")]
    PlanMismatch(String),

    #[error("design matrix is rank deficient (rank {rank} < {cols} columns)")]
    RankDeficient { rank: usize, cols: usize },

    #[error("edit mask schedule needs {required} rows but only {available} are available")]
    MaskCapacity { required: usize, available: usize },

    #[error("edit masks {first} and {second} overlap")]
    OverlappingMasks { first: usize, second: usize },

    #[error("feature profiles differ: {0}")]
    ProfileMismatch(String),

    #[error("histogram edges differ")]
    EdgeMismatch,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
