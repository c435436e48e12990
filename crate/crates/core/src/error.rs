use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),

    #[error("invalid rigid transform: {0}")]
    InvalidTransform(String),

    #[error("invalid depth at pixel ({u}, {v}): {value}")]
    InvalidDepth { u: usize, v: usize, value: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite feature value at pixel ({u}, {v})")]
    NonFiniteFeature { u: usize, v: usize },

    #[error("insufficient points: need at least {needed} valid points, found {found}")]
    InsufficientPoints { needed: usize, found: usize },

    #[error("no correspondences in either direction")]
    NoCorrespondences,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("scene generation failed: {0}")]
    Generation(String),

    #[error("failed to read {path}: {reason}")]
    Load { path: PathBuf, reason: String },

    #[error("failed to write {path}: {reason}")]
    Save { path: PathBuf, reason: String },

    #[error("{stage} stage: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerical pipeline rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Stage { source, .. } => source.is_numerical(),
            other => matches!(
                other,
                Error::DegenerateFit(_) | Error::NoCorrespondences | Error::InsufficientPoints { .. }
            ),
        }
    }

    pub fn load(path: impl Into<PathBuf>, reason: impl ToString) -> Self {
        Error::Load {
            path: path.into(),
            reason: reason.to_string(),
        }
    }

    pub fn save(path: impl Into<PathBuf>, reason: impl ToString) -> Self {
        Error::Save {
            path: path.into(),
            reason: reason.to_string(),
        }
    }
}
