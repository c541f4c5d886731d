use thiserror::Error;

use crate::fockmodel::BasisIndex;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("operator is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("symmetric eigensolver did not converge (dim {dim})")]
    SolverNonConvergence { dim: usize },

    #[error("eigenpair check failed: {0}")]
    EigenCheck(String),

    #[error("ambiguous label for eigenvector {level}: {first} and {second} overlap within 1e-6")]
    AmbiguousLabel {
        level: usize,
        first: BasisIndex,
        second: BasisIndex,
    },

    #[error("branch tracking between g={from} and g={to} reached overlap {overlap:.4} < {floor} after {refinements} bisections")]
    TrackingFailed {
        from: f64,
        to: f64,
        overlap: f64,
        floor: f64,
        refinements: usize,
    },

    #[error("degenerate level group at E={energy} is not split at first order")]
    UnresolvedDegeneracy { energy: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("label {0} is not tracked")]
    UnknownLabel(BasisIndex),

    #[error("degenerate case omega == Omega is not covered here; use the degenerate-case routines")]
    DegenerateFrequencies,

    #[error("ill-conditioned fit (condition number {condition:.3e}); {suggestion}")]
    IllConditionedFit { condition: f64, suggestion: String },

    #[error("malformed quadruple: {0}")]
    MalformedQuadruple(String),

    #[error("invalid level pair {j} / {k}: {reason}")]
    InvalidLevelPair {
        j: BasisIndex,
        k: BasisIndex,
        reason: &'static str,
    },

    #[error("window {window} exceeds trusted levels {trusted}")]
    WindowExceedsTrust { window: usize, trusted: usize },

    #[error("amplitude {amplitude} outside [0, {delta}]")]
    AmplitudeOutOfRange { amplitude: f64, delta: f64 },

    #[error("invalid pulse: {0}")]
    InvalidPulse(String),

    #[error("state is not normalized (norm {norm})")]
    NotNormalized { norm: f64 },

    #[error("no path of certified transitions from {source_level} to {target}")]
    NoPath {
        source_level: BasisIndex,
        target: BasisIndex,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("serialization failed: {0}")]
    Serialize(String),

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn at_stage(stage: &'static str) -> impl FnOnce(Error) -> Error {
        move |e| Error::Stage {
            stage,
            source: Box::new(e),
        }
    }
}
