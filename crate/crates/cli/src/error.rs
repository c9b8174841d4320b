use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Schema(String),
    #[error("solver failure: {0}")]
    Solver(#[from] qmetro::Error),
    #[error("{0}")]
    PartialFailure(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Input(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Schema(_) => 2,
            CliError::Solver(_) | CliError::PartialFailure(_) => 3,
            CliError::Io(_) | CliError::Input(_) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
