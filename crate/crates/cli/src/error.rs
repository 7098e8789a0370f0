use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("i/o failure: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<infofilter::Error> for CliError {
    fn from(e: infofilter::Error) -> Self {
        match e {
            infofilter::Error::InvalidInput(msg) => CliError::Validation(vec![msg]),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
