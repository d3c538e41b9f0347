use std::path::PathBuf;

use crate::qp::QpError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(transparent)]
    Qp(#[from] QpError),

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("RBF system is ill-conditioned (cond = {cond:.3e}); increase rho or use fewer nodes")]
    IllConditioned { cond: f64 },

    #[error("no usable impact samples")]
    NoSamples,

    #[error("contacts did not stay closed within the sampling horizon")]
    NoFullContact,

    #[error("simulation state became non-finite at t = {t:.6}: {detail}")]
    NonFinite { t: f64, detail: String },

    #[error("episode log: {0}")]
    LogFormat(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
