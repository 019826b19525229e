use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    /// Malformed configuration input; `path` names the offending key.
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    /// A hypothesis check failed; the report carries per-check detail.
    #[error("problem spec rejected:\n{0}")]
    SpecRejected(crate::model::ValidationReport),

    /// Implicit generator step requires `lipschitz * dt < 1`.
    #[error("step size rejected: lipschitz constant times dt is {0:.6}, must be < 1")]
    StepSize(f64),

    #[error("numerical failure: {0}")]
    Numerics(String),

    #[error("tolerance failure: {0}")]
    Tolerance(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// IO failure tagged with the file it touched.
    #[error("io error at `{path}`: {message}")]
    File { path: String, message: String },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn numerics(msg: impl Into<String>) -> Self {
        Error::Numerics(msg.into())
    }

    pub fn file(path: impl AsRef<std::path::Path>, err: std::io::Error) -> Self {
        Error::File {
            path: path.as_ref().display().to_string(),
            message: err.to_string(),
        }
    }

    /// Process exit code contract: 0 pass, 2 tolerance failure, 1 any error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Tolerance(_) => 2,
            _ => 1,
        }
    }
}
