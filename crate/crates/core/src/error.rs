use std::path::PathBuf;

/// Errors produced by graph loading, the privacy mechanisms and the estimators.
#[derive(Debug, thiserror::Error)]
#[non_exhaustive]
pub enum Error {
    /// A data line of an edge-list file could not be parsed.
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    /// An argument or a loaded structure violated a documented precondition.
    #[error("invalid input: {0}")]
    Validation(String),

    /// Query-pair rejection sampling hit its attempt cap.
    #[error(
        "infeasible kappa {kappa}: found {found} of {requested} pairs after {attempts} attempts"
    )]
    InfeasibleKappa {
        kappa: f64,
        found: usize,
        requested: usize,
        attempts: usize,
    },

    /// A message was recorded with a round index lower than one already in the transcript.
    #[error("protocol order violated: round {got} recorded after round {last}")]
    ProtocolOrder { last: u32, got: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
