use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CliError {
    /// Process exit code: 2 for configuration, 3 for data, 4 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl From<defglm::Error> for CliError {
    fn from(e: defglm::Error) -> Self {
        match e {
            defglm::Error::Config(_) => CliError::Config(e.to_string()),
            defglm::Error::Domain(_) | defglm::Error::Dimension(_) => CliError::Data(e.to_string()),
            defglm::Error::Numeric(_) => CliError::Numeric(e.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
