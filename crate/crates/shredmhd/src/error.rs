use std::path::PathBuf;

use shredmhd_core::dataset::DataError;
use shredmhd_core::eval::EvalError;
use shredmhd_core::linalg::LinalgError;
use shredmhd_core::mhdsim::SimError;
use shredmhd_core::shred::ShredError;

/// Pipeline-level errors.
#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed {what} in {path}: {detail}")]
    Format {
        what: &'static str,
        path: PathBuf,
        detail: String,
    },
    #[error("unsupported format version {found} (expected {expected}) in {path}")]
    Version {
        found: u32,
        expected: u32,
        path: PathBuf,
    },
    #[error("{0}")]
    Config(String),
    #[error("output directory is locked by another command: {0}")]
    Locked(PathBuf),
    #[error("missing runs for: {0}")]
    MissingRuns(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Network(#[from] ShredError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, AppError>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> AppError {
    let path = path.into();
    move |source| AppError::Io { path, source }
}
