use std::fmt;
use std::path::{Path, PathBuf};

use dish_core::{Error as CoreError, TrainError};

/// Failure classes with stable process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Input,
    Numeric,
    Internal,
}

impl Category {
    pub fn exit_code(self) -> i32 {
        match self {
            Category::Input => 2,
            Category::Numeric => 3,
            Category::Internal => 4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Input => "input",
            Category::Numeric => "numeric",
            Category::Internal => "internal",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{0}")]
    Invalid(String),
    #[error("checkpoint does not match the run config: {0}")]
    Incompatible(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

impl CliError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        CliError::Invalid(msg.into())
    }

    pub fn read(path: &Path, source: std::io::Error) -> Self {
        CliError::Read {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn write(path: &Path, source: std::io::Error) -> Self {
        CliError::Write {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn parse(path: &Path, line: usize, column: usize, message: impl Into<String>) -> Self {
        CliError::Parse {
            path: path.to_path_buf(),
            line,
            column,
            message: message.into(),
        }
    }

    pub fn category(&self) -> Category {
        match self {
            CliError::Read { .. } | CliError::Parse { .. } | CliError::Invalid(_) | CliError::Incompatible(_) => {
                Category::Input
            }
            CliError::Write { .. } => Category::Internal,
            CliError::Core(e) => core_category(e),
            CliError::Train(TrainError::Diverged { .. }) => Category::Numeric,
            CliError::Train(TrainError::Core(e)) => core_category(e),
        }
    }

    /// The single stderr line printed on failure.
    pub fn report_line(&self) -> String {
        let msg = self.to_string().replace('\n', " ");
        format!("error[{}]: {msg}", self.category())
    }
}

fn core_category(e: &CoreError) -> Category {
    match e {
        CoreError::NonFinite { .. } | CoreError::NonFiniteGradient { .. } => Category::Numeric,
        _ => Category::Input,
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
