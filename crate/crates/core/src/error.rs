use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::optimize::TracePoint;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("missing sidecar {}", .0.display())]
    MissingSidecar(PathBuf),

    #[error("invalid sidecar: {0}")]
    Sidecar(String),

    #[error("odd dimensions {height}x{width}")]
    OddDimensions { height: usize, width: usize },

    #[error("unknown cfa pattern {0:?}")]
    UnknownCfa(String),

    #[error("unsupported format: {0}")]
    Format(String),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("bad magic")]
    BadMagic,

    #[error("unsupported dtype code {0}")]
    DType(u8),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("crop at ({x0}, {y0}) size {width}x{height} would shift CFA phase")]
    CfaPhase {
        x0: usize,
        y0: usize,
        width: usize,
        height: usize,
    },

    #[error("region out of bounds: {0}")]
    OutOfBounds(String),

    #[error("ECC alignment did not converge: {0}")]
    NonConvergence(String),

    #[error("optimization diverged at step {step}")]
    Diverged { step: usize, trace: Vec<TracePoint> },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
