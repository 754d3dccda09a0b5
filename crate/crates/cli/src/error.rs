use grushin_core::GrushinError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] GrushinError),
    #[error("i/o on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("input format: {0}")]
    Format(String),
}

impl CliError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// 2 for bad input, 3 for numerical failure, 1 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Format(_) => 2,
            CliError::Io { .. } => 1,
            CliError::Core(e) => match e {
                GrushinError::InvalidDomain(_)
                | GrushinError::EmptyRegion(_)
                | GrushinError::InvalidParameter { .. }
                | GrushinError::UnderResolved(_)
                | GrushinError::Hypothesis(_)
                | GrushinError::UnknownStrategy { .. }
                | GrushinError::Unsupported(_) => 2,
                _ => 3,
            },
        }
    }
}

pub const EXIT_CHECK_FAILED: i32 = 3;
