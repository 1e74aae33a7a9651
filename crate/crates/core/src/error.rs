use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the solver stack.
#[derive(Debug, Error)]
pub enum ZkError {
    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("non-finite sample value {value} at x = {x}, y = {y}, z = {z}")]
    NonFiniteSample { x: f64, y: f64, z: f64, value: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("unsupported derivative: {0}")]
    UnsupportedDerivative(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("singular linear system for transverse mode {mode}: {detail}")]
    SingularSystem { mode: String, detail: String },

    #[error("numerical fault at t = {t}: {detail}")]
    NumericalFault { t: f64, detail: String },

    #[error("stale linear system cache: {0}")]
    StaleCache(String),

    #[error("config syntax error at line {line}: {message}")]
    ConfigSyntax { line: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("snapshot format error: {0}")]
    Snapshot(String),

    #[error("csv error in {path}: {message}")]
    Csv { path: PathBuf, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = ZkError> = std::result::Result<T, E>;

impl ZkError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ZkError::Io {
            path: path.into(),
            source,
        }
    }
}

/// Process exit code for a configuration error.
pub const EXIT_CONFIG: i32 = 2;
/// Process exit code for a numerical fault.
pub const EXIT_NUMERICAL: i32 = 3;
/// Process exit code for a run stopped by the blowup guard.
pub const EXIT_BLOWUP: i32 = 4;

impl ZkError {
    /// Exit code of the `zk` binary for this error; I/O and format errors map to 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            ZkError::ConfigSyntax { .. }
            | ZkError::Config(_)
            | ZkError::UnknownPreset(_)
            | ZkError::InvalidGrid(_)
            | ZkError::GridTooCoarse(_)
            | ZkError::InvalidArgument(_)
            | ZkError::UnsupportedDerivative(_) => EXIT_CONFIG,
            ZkError::NumericalFault { .. } | ZkError::SingularSystem { .. } | ZkError::NonFiniteSample { .. } => {
                EXIT_NUMERICAL
            }
            ZkError::GridMismatch(_)
            | ZkError::StaleCache(_)
            | ZkError::Snapshot(_)
            | ZkError::Csv { .. }
            | ZkError::Io { .. } => 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(ZkError::Config("x".into()).exit_code(), EXIT_CONFIG);
        assert_eq!(
            ZkError::ConfigSyntax {
                line: 1,
                message: "x".into()
            }
            .exit_code(),
            EXIT_CONFIG
        );
        assert_eq!(
            ZkError::NumericalFault {
                t: 0.0,
                detail: "nan".into()
            }
            .exit_code(),
            EXIT_NUMERICAL
        );
        assert_eq!(ZkError::Snapshot("x".into()).exit_code(), 1);
    }
}
