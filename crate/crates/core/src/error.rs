use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("repulsion did not converge within the {budget}-iteration budget (n = {n})")]
    NonConvergence { n: usize, budget: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("field of view {fov_deg:.3} deg is not rectilinear; a gnomonic tile needs fov < 180 deg")]
    FovTooWide { fov_deg: f64 },

    #[error("degenerate homography: {0}")]
    DegenerateHomography(&'static str),

    #[error("malformed marker dictionary: {0}")]
    Dictionary(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn format(path: impl Into<PathBuf>, msg: impl ToString) -> Self {
        Error::Format { path: path.into(), msg: msg.to_string() }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
