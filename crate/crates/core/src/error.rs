use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unbalanced panel: variable '{variable}' missing at {date}")]
    BalancedPanel { variable: String, date: String },

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("state error: {0}")]
    State(String),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("degenerate series: {0}")]
    DegenerateSeries(String),

    #[error("rank error: {0}")]
    Rank(String),

    #[error("rank deficiency: eigenvalue {index} is {value:.3e}, below tolerance")]
    RankDeficiency { index: usize, value: f64 },

    #[error("instrument/innovation overlap too short: {got} observations, need at least {need}")]
    Overlap { got: usize, need: usize },

    #[error("weak instrument: delta'*Sigma*delta = {0:.3e} is not positive")]
    WeakInstrument(f64),

    #[error("normalization error: {0}")]
    Normalization(String),

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("too many replication failures: {failed} of {total}")]
    ExcessFailures { failed: usize, total: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
