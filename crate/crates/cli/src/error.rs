use sonocaustics::Error;

/// Failure of a command, split by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad configuration or input files; exit code 1.
    #[error("{0}")]
    Validation(String),
    /// The pipeline failed while running; exit code 2.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    /// Prefixes the message, keeping the kind.
    pub fn context(self, what: impl std::fmt::Display) -> Self {
        match self {
            CliError::Validation(m) => CliError::Validation(format!("{what}: {m}")),
            CliError::Runtime(m) => CliError::Runtime(format!("{what}: {m}")),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::DimensionMismatch { .. }
            | Error::PhaseCount { .. }
            | Error::CoincidentSample { .. }
            | Error::InvalidParameter(_)
            | Error::Format { .. } => CliError::Validation(e.to_string()),
            Error::Degenerate(_)
            | Error::ZeroNorm(_)
            | Error::EmptyRegion(_)
            | Error::ZeroBackground
            | Error::Io(_) => CliError::Runtime(e.to_string()),
        }
    }
}
