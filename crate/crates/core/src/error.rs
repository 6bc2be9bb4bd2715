use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("line {line}: expected {expected} fields, found {found}")]
    RowArity {
        line: u64,
        expected: usize,
        found: usize,
    },

    #[error("line {line}, column `{column}`: {message}")]
    Field {
        line: u64,
        column: String,
        message: String,
    },

    #[error("no area threshold configured for state(s): {}", .0.join(", "))]
    MissingStateThreshold(Vec<String>),

    #[error("record {record}: missing value for `{field}`")]
    MissingValue { record: String, field: String },

    #[error("column `{0}` has no non-missing values to impute from")]
    EmptyColumn(String),

    #[error("contrast {contrast_id} ({name}): {reason}")]
    EmptyContrast {
        contrast_id: u8,
        name: String,
        reason: String,
    },

    #[error("treatment indicator has a single class")]
    SingleClass,

    #[error("class {0} has fewer than 2 observations")]
    SparseClass(String),

    #[error("perfect separation: {0}")]
    Separation(String),

    #[error("singular weighted normal equations")]
    Singular,

    #[error("no convergence after {0} iterations")]
    NotConverged(usize),

    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("empty common support: treated and control score ranges do not overlap")]
    EmptySupport,

    #[error(
        "convergence not achieved: {successful} of {requested} bootstrap replicates succeeded"
    )]
    Bootstrap { successful: usize, requested: usize },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::MissingStateThreshold(_) => 1,
            Error::Io(_) | Error::RowArity { .. } | Error::Field { .. } | Error::Csv(_) => 3,
            _ => 2,
        }
    }
}
