use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A value lies outside the support or parameter domain of a family.
    #[error("domain error: {0}")]
    Domain(String),
    /// Invalid configuration: knot counts, hyperparameter rectangles, fold counts.
    #[error("configuration error: {0}")]
    Config(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    /// Non-convergent truncation, divergent fits, non-finite values.
    #[error("numeric failure: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(what: &str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension(format!("{what}: expected length {expected}, got {got}")))
    }
}
