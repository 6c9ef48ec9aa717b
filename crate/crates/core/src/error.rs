//! Crate-wide error type with stable exit-code classes.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong across the pipeline, grouped into the three
/// exit-code classes of the command-line surface: configuration (2),
/// data (3), numeric failure (4).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error at row {row}, column {col}: {message}")]
    Parse {
        row: usize,
        col: usize,
        message: String,
    },

    #[error("all {dropped} data rows were dropped during complete-case filtering")]
    AllRowsDropped { dropped: usize },

    #[error("non-integer cell at row {row}, column {col}: {value:?}")]
    NonIntegerCell {
        row: usize,
        col: usize,
        value: String,
    },

    #[error("dataset has no rows")]
    EmptyDataset,

    #[error("item {item:?} is degenerate: all observed mass in a single category")]
    DegenerateItem { item: String },

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("item {item:?}: category {code} has zero training mass outside the observed range")]
    UnseenCategory { item: String, code: u32 },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("node set mismatch: {0}")]
    NodeSetMismatch(String),

    #[error("empty test set")]
    EmptyTestSet,

    #[error("no matched clusters in alignment")]
    NoMatchedClusters,

    #[error("invalid item-set variant: {0}")]
    InvalidVariant(String),

    #[error("invalid tier spec: {0}")]
    InvalidSpec(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("quantile argument {0} outside (0,1)")]
    QuantileDomain(f64),

    #[error("singular design matrix: {0}")]
    SingularDesign(String),

    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl Error {
    /// Process exit code for the CLI: 2 config error, 3 data error,
    /// 4 numeric failure.
    pub fn exit_code(&self) -> i32 {
        use Error::*;
        match self {
            InvalidConfig(_) => 2,
            Io(_)
            | Parse { .. }
            | AllRowsDropped { .. }
            | NonIntegerCell { .. }
            | EmptyDataset
            | DegenerateItem { .. }
            | SchemaMismatch(_)
            | UnseenCategory { .. }
            | LengthMismatch(_)
            | NodeSetMismatch(_)
            | EmptyTestSet
            | NoMatchedClusters
            | InvalidVariant(_)
            | InvalidSpec(_)
            | Json(_)
            | Csv(_) => 3,
            QuantileDomain(_) | SingularDesign(_) | Numeric(_) => 4,
        }
    }
}
