use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad user configuration (flags, config file, batching parameters).
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Bad input data, with the 1-based line number when known.
    #[error("line {line}: {msg}")]
    DataAt { line: u64, msg: String },

    #[error("invalid data: {0}")]
    Data(String),

    /// An internal invariant did not hold.
    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn at(line: u64, msg: impl Into<String>) -> Self {
        Error::DataAt { line, msg: msg.into() }
    }

    pub(crate) fn invariant(msg: impl Into<String>) -> Self {
        Error::Invariant(msg.into())
    }

    /// Prefixes the message with `ctx`, keeping the error class.
    pub fn context(self, ctx: &str) -> Self {
        match self {
            Error::Config(m) => Error::Config(format!("{ctx}: {m}")),
            Error::DataAt { line, msg } => Error::DataAt { line, msg: format!("{ctx}: {msg}") },
            Error::Data(m) => Error::Data(format!("{ctx}: {m}")),
            Error::Invariant(m) => Error::Invariant(format!("{ctx}: {m}")),
            other => other,
        }
    }

    /// Process exit code for this error: 2 config, 3 data, 4 invariant.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::DataAt { .. } | Error::Data(_) | Error::Io(_) | Error::Json(_) => 3,
            Error::Invariant(_) => 4,
        }
    }
}
