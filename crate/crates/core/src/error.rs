use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse error class used by the command-line surface to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad flags, bad config, mutually inconsistent options.
    Usage,
    /// Unreadable, malformed, or out-of-contract input data.
    Data,
    /// Numerical failure: divergence, singular systems, overflow.
    Numeric,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Usage => 2,
            ErrorClass::Data => 3,
            ErrorClass::Numeric => 4,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ErrorClass::Usage => "usage",
            ErrorClass::Data => "data",
            ErrorClass::Numeric => "numeric",
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("rejected input: {0}")]
    RejectedInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("integer overflow while computing {0}")]
    Overflow(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("state diverged at step {step}: entry magnitude exceeded {limit:e}")]
    Diverged { step: usize, limit: f64 },

    #[error("singular system at lambda={lambda:e}")]
    SingularSystem { lambda: f64 },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Usage(_) => ErrorClass::Usage,
            Error::RejectedInput(_)
            | Error::DimensionMismatch(_)
            | Error::Parse { .. }
            | Error::Data(_)
            | Error::Io { .. } => ErrorClass::Data,
            Error::Overflow(_)
            | Error::Numeric(_)
            | Error::Diverged { .. }
            | Error::SingularSystem { .. } => ErrorClass::Numeric,
        }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
