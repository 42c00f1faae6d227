use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Message printed by the divide-and-conquer guard when the per-block tail
/// quota drops below one point.
pub const QUOTA_UNDERFLOW_MESSAGE: &str =
    "The number of data points from each covariate tail is smaller than one.";

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value at row {row}, column {col}")]
    NonFiniteValue { row: usize, col: usize },

    #[error("block rows [{row_offset}, {row_offset}+{rows}) exceed dataset size {n_rows}")]
    OffsetOutOfRange {
        row_offset: usize,
        rows: usize,
        n_rows: usize,
    },

    #[error("order statistic {k} out of range for {len} values")]
    IndexOutOfRange { k: usize, len: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("tail quota {r} exceeds the {len} available values")]
    QuotaTooLarge { r: usize, len: usize },

    #[error("subdata size {k} exceeds the {rows} rows available")]
    QuotaInfeasible { k: usize, rows: usize },

    #[error("{} (k = {k}, p = {p}, B = {blocks})", QUOTA_UNDERFLOW_MESSAGE)]
    QuotaUnderflow { k: usize, p: usize, blocks: usize },

    #[error("block {block} has {rows} rows but {needed} are required")]
    BlockTooSmall {
        block: usize,
        rows: usize,
        needed: usize,
    },

    #[error("least squares fit failed on block {block}: {source}")]
    SingularBlockFit {
        block: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("singular design matrix (reciprocal condition estimate {rcond:e})")]
    SingularDesign { rcond: f64 },

    #[error("need more than {needed} rows, got {rows}")]
    InsufficientRows { rows: usize, needed: usize },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("covariate {0} is constant")]
    ConstantColumn(usize),

    #[error("covariate {0} has zero range")]
    ZeroRange(usize),

    #[error("mixture cases need a row count divisible by 5, got {0}")]
    IndivisibleMixSize(usize),

    #[error("responses are required but the block has none")]
    MissingResponses,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },

    #[error("header mismatch: {0}")]
    HeaderMismatch(String),

    #[error("config error at line {line}, key `{key}`: {message}")]
    Config {
        line: usize,
        key: String,
        message: String,
    },

    #[error("I/O failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse classification used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Format,
    Quota,
    Numerical,
    Other,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::MalformedRow { .. }
            | Error::HeaderMismatch(_)
            | Error::NonFiniteValue { .. }
            | Error::DimensionMismatch { .. } => ErrorClass::Format,
            Error::QuotaUnderflow { .. }
            | Error::QuotaInfeasible { .. }
            | Error::QuotaTooLarge { .. }
            | Error::BlockTooSmall { .. } => ErrorClass::Quota,
            Error::SingularDesign { .. }
            | Error::SingularBlockFit { .. }
            | Error::NotSymmetric { .. }
            | Error::ConstantColumn(_)
            | Error::ZeroRange(_) => ErrorClass::Numerical,
            _ => ErrorClass::Other,
        }
    }
}
