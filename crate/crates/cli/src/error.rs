//! Error type with the stable exit-code contract: 0 success, 2 usage or
//! configuration error, 3 data/schema/IO error, 4 numerical failure.

use icox::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags or an invalid configuration; exit code 2 (matching clap's
    /// own usage-error code).
    #[error("{0}")]
    Usage(String),
    /// Unreadable, malformed or insufficient data, or a filesystem failure;
    /// exit code 3.
    #[error("{0}")]
    Data(String),
    /// The computation itself failed (non-finite loss, divergence, broken
    /// reproducibility); exit code 4.
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

/// A core error raised while validating user-supplied configuration.
pub fn usage(e: CoreError) -> CliError {
    CliError::Usage(e.to_string())
}

/// A core error raised while reading or assembling data.
pub fn data(e: CoreError) -> CliError {
    CliError::Data(e.to_string())
}

/// A core error raised inside a numerical routine. Unidentifiable means the
/// data cannot support the requested estimate, which is a data problem; the
/// rest are genuine numerical failures.
pub fn compute(e: CoreError) -> CliError {
    match e {
        CoreError::Unidentifiable(_) => CliError::Data(e.to_string()),
        _ => CliError::Numeric(e.to_string()),
    }
}

/// A filesystem failure while touching `path`.
pub fn io(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}
