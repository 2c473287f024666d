use thiserror::Error;

/// Failure classes for the whole toolkit.
///
/// Each class maps to a fixed process exit code so callers can script
/// against failures: `Config` -> 2, `Data` -> 3, `Numerics` -> 4.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent configuration: bad schedules, unknown
    /// regime references, infeasible population targets.
    #[error("config error: {0}")]
    Config(String),

    /// Bad input data: unreadable files, schema violations, duplicate ids,
    /// requests that reference records that do not exist.
    #[error("data error: {0}")]
    Data(String),

    /// Numerical failure: rank-deficient designs, too few clusters,
    /// non-convergent moment solves.
    #[error("numerical error: {0}")]
    Numerics(String),
}

impl Error {
    /// Process exit code for this failure class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Data(_) => 3,
            Error::Numerics(_) => 4,
        }
    }

    /// Stable machine-readable tag, used in error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Data(_) => "data",
            Error::Numerics(_) => "numerics",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Data(format!("io: {e}"))
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(format!("json: {e}"))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
