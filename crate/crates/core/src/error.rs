use thiserror::Error;

/// Errors raised by ingestion, validation, kernels and estimation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at row {row}, column `{column}`: {msg}")]
    Parse {
        row: usize,
        column: String,
        msg: String,
    },

    #[error("domain error{}: {msg}", fmt_row(.row))]
    Domain { row: Option<usize>, msg: String },

    #[error("spec error: {0}")]
    Spec(String),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("numeric input error: {0}")]
    NumericInput(String),

    #[error("lookup error: covariate `{0}` does not enter the model")]
    Lookup(String),

    #[error("state error: {0}")]
    State(String),

    #[error("init error: {0}")]
    Init(String),

    #[error("comparison error: {0}")]
    Comparison(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("division error: {0}")]
    Division(String),

    #[error("log-likelihood underflow: probability of the observed category is zero at row {row}")]
    Underflow { row: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn fmt_row(row: &Option<usize>) -> String {
    match row {
        Some(r) => format!(" at row {r}"),
        None => String::new(),
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(name: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::NumericInput(format!(
            "{name} must be finite, got {value}"
        )))
    }
}
