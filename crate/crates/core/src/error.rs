use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation (e.g. non-positive depth).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected:?}, got {actual:?} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: (usize, usize),
        actual: (usize, usize),
    },

    /// A raster or parameter block violates its type invariants.
    #[error("invalid value: {0}")]
    Invalid(String),

    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),

    #[error("unsolvable system: {0}")]
    Unsolvable(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("scene {scene}: {source}")]
    Scene {
        scene: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// Attaches a scene id to an error raised while processing that scene.
    pub fn in_scene(self, scene: impl Into<String>) -> Self {
        Error::Scene {
            scene: scene.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping scene wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Scene { source, .. } => source.root(),
            other => other,
        }
    }
}
