use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] liesde::Error),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("{failed} of {total} criteria failed")]
    Regression { failed: usize, total: usize },
}

impl CliError {
    /// 2 usage, 3 violated precondition, 4 numerical breakdown, 1 anything else.
    pub fn exit_code(&self) -> u8 {
        use liesde::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) if e.is_numerical() => 4,
            CliError::Core(
                E::InvalidArgument(_) | E::GridMismatch(_) | E::Dimension(_) | E::Unsupported(_),
            ) => 2,
            CliError::Core(_) => 3,
            CliError::Io(_) | CliError::Regression { .. } => 1,
        }
    }
}
