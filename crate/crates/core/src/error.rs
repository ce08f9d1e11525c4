use thiserror::Error;

use crate::mode::Mode;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("mode {mode} is outside the domain of map `{map}`")]
    OutsideDomain { mode: Mode, map: String },

    #[error("mode {0} is outside the m=0 subspace")]
    OutsideTamZero(Mode),

    #[error("orbital number {orbital} is outside the tracked range ±{limit}")]
    UntrackedOrbital { orbital: i32, limit: i32 },

    #[error("helicity must be +1 or -1, got {0}")]
    InvalidHelicity(i32),

    #[error("state is not normalized: squared norm {0}")]
    NotNormalized(f64),

    #[error("state has zero norm")]
    ZeroNorm,

    #[error("mixture weights must be non-negative, got {0}")]
    NegativeWeight(f64),

    #[error("all mixture weights are zero")]
    ZeroWeights,

    #[error("invalid density matrix: {0}")]
    InvalidDensity(String),

    #[error("expected dimension {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("polarizer axis has zero length")]
    ZeroAxis,

    #[error("invalid optical element: {0}")]
    InvalidElement(String),

    #[error("invalid source model: {0}")]
    InvalidSource(String),

    #[error("invalid aperture coefficients: {0}")]
    InvalidCoefficients(String),

    #[error("degenerate scan: {0}")]
    DegenerateScan(String),

    #[error("scan has no baseline or zero-delay point")]
    MissingBaseline,

    #[error("measurement settings are not tomographically complete (rank {0} < 16)")]
    RankDeficient(usize),

    #[error("all counts are zero")]
    ZeroCounts,

    #[error("counts and settings differ in length ({counts} vs {settings})")]
    CountMismatch { counts: usize, settings: usize },

    #[error("unknown projector label `{0}`")]
    UnknownProjector(String),

    #[error("invalid scenario field `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("cannot parse scenario: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit status for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse(_) => 2,
            Error::Io(_) | Error::Csv(_) | Error::Json(_) => 1,
            _ => 3,
        }
    }
}
