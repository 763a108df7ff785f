//! Failure classes and the process exit codes they map to.

use serde::Serialize;

use crate::files::FileError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExitKind {
    Generic = 1,
    Parse = 2,
    LinkInsecure = 3,
    Simulation = 4,
    Reconciliation = 5,
    Reject = 6,
    KeyExhausted = 7,
    Malformed = 8,
    Aborted = 9,
}

impl ExitKind {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct Failure {
    pub kind: ExitKind,
    pub message: String,
}

impl Failure {
    pub fn new(kind: ExitKind, message: impl Into<String>) -> Self {
        Self { kind, message: message.into() }
    }
}

impl From<FileError> for Failure {
    fn from(e: FileError) -> Self {
        let kind = match &e {
            FileError::Parse { .. } => ExitKind::Parse,
            FileError::Corrupt { .. } => ExitKind::Malformed,
            FileError::Io { .. } => ExitKind::Generic,
        };
        Failure::new(kind, e.to_string())
    }
}

/// The exit code for an error chain: the first [`Failure`] in it, else 1.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    err.chain()
        .find_map(|c| c.downcast_ref::<Failure>())
        .map_or(ExitKind::Generic.code(), |f| f.kind.code())
}
