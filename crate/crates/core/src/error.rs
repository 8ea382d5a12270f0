use thiserror::Error;

/// Errors raised by the toolkit.
///
/// The variants are grouped by how the command-line front-end reports them:
/// precondition and certification failures exit with status 1, malformed
/// input and I/O failures with status 2.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("certification required: {0}")]
    Certification(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("no certified fixed point: {0}")]
    NoFixedPoint(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable tag for the error class.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Malformed(_) => "malformed",
            Error::Precondition(_) => "precondition",
            Error::Degenerate(_) => "degenerate",
            Error::Certification(_) => "certification",
            Error::Numerical(_) => "numerical",
            Error::NoFixedPoint(_) => "no_fixed_point",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }

    /// Process exit status used by the CLI.
    pub fn exit_status(&self) -> u8 {
        match self {
            Error::Precondition(_)
            | Error::Degenerate(_)
            | Error::Certification(_)
            | Error::Numerical(_)
            | Error::NoFixedPoint(_) => 1,
            Error::Malformed(_) | Error::Io(_) | Error::Json(_) | Error::Csv(_) => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
