use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Accounting(#[from] gdp_core::Error),

    #[error(transparent)]
    Training(#[from] gdp_optim::OptimError),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{failed} of {total} checks failed")]
    Verification { failed: usize, total: usize },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use gdp_core::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Accounting(E::Domain { .. }) => 2,
            CliError::Accounting(_) => 3,
            CliError::Training(gdp_optim::OptimError::Accounting(E::Domain { .. })) => 2,
            CliError::Training(gdp_optim::OptimError::Accounting(_)) => 3,
            CliError::Training(gdp_optim::OptimError::Io(_)) => 4,
            CliError::Training(_) => 2,
            CliError::Io { .. } => 4,
            CliError::Verification { .. } => 5,
        }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
