use std::fmt;
use std::path::Path;

use tap_core::trajectory::IngestError;
use thiserror::Error;

/// Exit code 1 for validation errors, 2 for I/O errors.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{message}")]
    Invalid { kind: String, message: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl CliError {
    pub fn invalid(kind: &str, message: impl Into<String>) -> Self {
        CliError::Invalid { kind: kind.to_string(), message: message.into() }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::invalid("Usage", message)
    }

    pub fn io(path: &Path, e: impl fmt::Display) -> Self {
        CliError::Io { path: path.display().to_string(), message: e.to_string() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid { .. } => 1,
            CliError::Io { .. } => 2,
        }
    }

    pub fn to_json(&self) -> String {
        let kind = match self {
            CliError::Invalid { kind, .. } => kind.as_str(),
            CliError::Io { .. } => "Io",
        };
        serde_json::json!({ "error": kind, "message": self.to_string(), "exit_code": self.exit_code() }).to_string()
    }
}

/// Variant name from a Debug rendering, e.g. `EmptyDistribution`.
fn variant_name(debug: &str) -> String {
    debug.chars().take_while(|c| c.is_alphanumeric() || *c == '_').collect()
}

/// Wraps any library error as a validation failure.
pub fn invalid<E: fmt::Debug + fmt::Display>(e: E) -> CliError {
    CliError::Invalid { kind: variant_name(&format!("{e:?}")), message: e.to_string() }
}

pub fn from_ingest(path: &Path, e: IngestError) -> CliError {
    match e {
        IngestError::Io(io) => CliError::io(path, io),
        other => invalid(other),
    }
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}
