use qbld_core::QbldError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] QbldError),
}

impl CliError {
    pub fn io(path: &std::path::Path, err: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }

    /// 2 config, 3 I/O or unreadable input, 4 numerical failure, 5 missing alpha draws.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Core(e) => match e {
                QbldError::Sweep { .. } => 4,
                QbldError::Config(_) | QbldError::Domain(_) => 2,
                QbldError::Io(_)
                | QbldError::Csv(_)
                | QbldError::Json(_)
                | QbldError::Parse { .. }
                | QbldError::Schema(_)
                | QbldError::EmptyIndividual(_) => 3,
                QbldError::MissingAlpha => 5,
                _ => 4,
            },
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
