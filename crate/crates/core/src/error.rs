use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("bad dimension {found} for {what}")]
    BadDimension { what: &'static str, found: usize },
    #[error("delayed-rejection stage {stage} out of range (max {max})")]
    StageOutOfRange { stage: usize, max: usize },
    #[error("acceptance probability {0} outside [0, 1]")]
    InvalidAlpha(f64),
    #[error("start point has zero density")]
    NonFiniteStart,
    #[error("target density returned NaN")]
    NanDensity,
    #[error("requested range is empty")]
    EmptyRange,
    #[error("series too short: need at least {needed} points, found {found}")]
    SeriesTooShort { needed: usize, found: usize },
    #[error("sample is empty")]
    EmptySample,
    #[error("contribution tally is empty")]
    EmptyTally,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed snapshot: {0}")]
    Decode(&'static str),
}
