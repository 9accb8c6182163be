use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("rotation angle too close to pi for a Rodrigues vector (|q1| = {0:e})")]
    NearPiRotation(f64),

    #[error("Euler angle {name} = {value} outside [{lo}, {hi}]")]
    EulerOutOfRange {
        name: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("quaternion must be finite and nonzero, got {0:?}")]
    InvalidQuaternion([f64; 4]),

    #[error("unknown symmetry group `{0}`")]
    UnknownGroup(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("group axiom violated: {0}")]
    GroupAxiomViolation(String),

    #[error("no group translate lies in the fundamental zone")]
    NoZoneFound,

    #[error("mean resultant length {0} outside [0, 1)")]
    ResultantOutOfRange(f64),

    #[error("resultant vector vanishes (norm {0:e}); mean direction undefined")]
    DegenerateResultant(f64),

    #[error("non-finite log-likelihood encountered")]
    NonFiniteLikelihood,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerical machinery rather than of the input data.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DegenerateResultant(_)
                | Error::NonFiniteLikelihood
                | Error::NoZoneFound
                | Error::ResultantOutOfRange(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
