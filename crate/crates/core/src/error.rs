use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid dimension {width}x{height}: both sides must be at least 2")]
    InvalidDimension { width: usize, height: usize },

    #[error("degenerate source triangle at face {face}")]
    DegenerateFace { face: usize },

    #[error("map is not an orientation-preserving homeomorphism: {} folded or collapsed face(s), first {:?}", faces.len(), &faces[..faces.len().min(8)])]
    NonHomeomorphism { faces: Vec<usize> },

    #[error("|mu| = {modulus} is not below 1")]
    NotQuasiConformal { modulus: f64 },

    #[error("linear solver failed: {0}")]
    SolverFailure(String),

    #[error("invalid constraint: {0}")]
    InvalidConstraint(String),

    #[error("invalid landmark {name}: {reason}")]
    InvalidLandmark { name: String, reason: String },

    #[error("missing landmark {0}")]
    MissingLandmark(String),

    #[error("registration failed: {0}")]
    RegistrationFailure(String),

    #[error("invalid window size {0}: must be odd and positive")]
    InvalidWindow(usize),

    #[error("degenerate landmark configuration: {0}")]
    DegenerateLandmark(String),

    #[error("cannot normalize distance column {column}: cohort maximum is {max}")]
    Normalization { column: String, max: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid sample: {0}")]
    InvalidSample(String),

    #[error("invalid cohort: {0}")]
    InvalidCohort(String),

    #[error("invalid K = {k}: must be in 1..={max}")]
    InvalidK { k: usize, max: usize },

    #[error("stratification failed: {0}")]
    Stratification(String),

    #[error("phantom generation failed: {0}")]
    Generation(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl Error {
    /// Stable machine-readable category used by the CLI for error reporting and exit codes.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } | Error::MissingLandmark(_) | Error::InvalidLandmark { .. } => {
                "ingestion"
            }
            Error::SolverFailure(_) | Error::RegistrationFailure(_) => "numerical",
            Error::NonHomeomorphism { .. }
            | Error::DegenerateFace { .. }
            | Error::NotQuasiConformal { .. } => "geometry",
            Error::InvalidCohort(_) | Error::Stratification(_) | Error::InvalidSample(_) => {
                "cohort"
            }
            _ => "input",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }
}
