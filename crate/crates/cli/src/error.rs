use std::fmt;
use std::path::PathBuf;

use serde_json::json;
use toedit_core::editor::DocumentFailure;
use toedit_core::Error as CoreError;

pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_PROTOCOL: i32 = 4;

#[derive(Debug)]
pub enum CliError {
    /// Every problem found while resolving flags and the config file.
    Config(Vec<String>),
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    Core(CoreError),
    /// Replayed outputs differ from the digests in the manifest.
    Replay(Vec<String>),
    /// Outputs were written but some documents could not be processed.
    Documents(Vec<DocumentFailure>),
}

pub type CliResult<T> = Result<T, CliError>;

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(vec![msg.into()])
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io { .. } => EXIT_IO,
            CliError::Replay(_) => EXIT_FAILURE,
            CliError::Documents(list) if list.iter().any(|f| f.protocol) => EXIT_PROTOCOL,
            CliError::Documents(_) => EXIT_FAILURE,
            CliError::Core(e) => match e {
                CoreError::InvalidArgument(_)
                | CoreError::InsufficientDocuments { .. }
                | CoreError::MaskCapacity { .. }
                | CoreError::OverlappingMasks { .. }
                | CoreError::ProfileMismatch(_)
                | CoreError::EdgeMismatch => EXIT_CONFIG,
                CoreError::Io { .. }
                | CoreError::Record { .. }
                | CoreError::UnrecognizedPrior
                | CoreError::PriorVersion { .. }
                | CoreError::MalformedPrior(_) => EXIT_IO,
                CoreError::Transport { .. }
                | CoreError::Conformance { .. }
                | CoreError::Model(_) => EXIT_PROTOCOL,
                _ => EXIT_FAILURE,
            },
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Io { .. } => "io",
            CliError::Replay(_) => "replay_mismatch",
            CliError::Documents(_) if self.exit_code() == EXIT_PROTOCOL => "protocol",
            CliError::Documents(_) => "document_failures",
            CliError::Core(e) => match e {
                CoreError::Transport { .. } => "transport",
                CoreError::Conformance { .. } => "conformance",
                CoreError::Model(_) => "model",
                _ => match self.exit_code() {
                    EXIT_CONFIG => "config",
                    EXIT_IO => "io",
                    _ => "failure",
                },
            },
        }
    }

    /// Single-line JSON description for stderr.
    pub fn to_json(&self) -> String {
        let mut v = json!({
            "error": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        });
        match self {
            CliError::Config(list) => v["violations"] = json!(list),
            CliError::Replay(list) => v["mismatches"] = json!(list),
            CliError::Documents(list) => v["documents"] = json!(list),
            CliError::Core(CoreError::Conformance { rule, .. }) => v["rule"] = json!(rule),
            _ => {}
        }
        v.to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(list) => write!(f, "invalid configuration: {}", list.join("; ")),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Replay(list) => {
                write!(f, "replay differs from manifest: {}", list.join(", "))
            }
            CliError::Documents(list) => write!(
                f,
                "{} document(s) failed, first {}: {}",
                list.len(),
                list[0].doc_id,
                list[0].error
            ),
        }
    }
}
