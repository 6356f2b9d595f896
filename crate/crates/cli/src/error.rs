use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    ConfigParse(String),

    #[error("{path}: {source}")]
    FileIo {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Usage(String),

    #[error("{mismatches} of {trials} trials disagree (worst relative deviation {worst:.3e})")]
    LemmaMismatch {
        mismatches: usize,
        trials: usize,
        worst: f64,
    },

    #[error(transparent)]
    Core(#[from] thermadiab::Error),
}

impl CliError {
    pub fn tag(&self) -> &'static str {
        match self {
            CliError::ConfigParse(_) => "ConfigParse",
            CliError::FileIo { .. } => "FileIO",
            CliError::Usage(_) => "Usage",
            CliError::LemmaMismatch { .. } => "LemmaMismatch",
            CliError::Core(e) => e.tag(),
        }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| CliError::FileIo { path, source }
    }
}

pub type CliResult<T> = Result<T, CliError>;
