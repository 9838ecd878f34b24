use std::path::PathBuf;

use l3scan_nn::NnError;

pub type Result<T> = std::result::Result<T, CoreError>;

#[derive(Debug, thiserror::Error)]
pub enum CoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: bad header field `{field}`: {reason}")]
    Format {
        path: PathBuf,
        field: String,
        reason: String,
    },
    #[error("{path}: payload holds {found} bytes, header declares {expected}")]
    Truncated {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("out of domain: {0}")]
    Domain(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("insufficient data: {0}")]
    Insufficient(String),
    #[error("undefined measure: {0}")]
    Undefined(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("config: {0}")]
    Config(String),
    #[error("csv {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error(transparent)]
    Nn(#[from] NnError),
}

impl CoreError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerical machinery rather than the inputs.
    pub fn is_numeric(&self) -> bool {
        match self {
            Self::NonFiniteLoss { .. } => true,
            Self::Nn(e) => matches!(e, NnError::NonFiniteGradient { .. }),
            _ => false,
        }
    }
}
