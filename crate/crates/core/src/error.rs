use std::path::PathBuf;

/// Unified error type for the library. CLI exit codes map onto the
/// coarse categories: config -> 1, data -> 2, did-not-converge -> 3.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config error at line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("config error: {0}")]
    ConfigGeneral(String),

    #[error("data error in {path}: {msg}")]
    Data { path: PathBuf, msg: String },

    #[error("data error: {0}")]
    DataGeneral(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value produced in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("preset `{0}` requires convergence but a run hit max_rounds without terminating")]
    DidNotConverge(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn data(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Data { path: path.into(), msg: msg.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit code the CLI uses for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::ConfigGeneral(_) | Error::InvalidArgument(_) => 1,
            Error::Data { .. } | Error::DataGeneral(_) | Error::Io { .. } => 2,
            Error::DidNotConverge(_) => 3,
            Error::Shape(_) | Error::NonFinite(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
