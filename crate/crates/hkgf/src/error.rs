use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{0} already exists (pass --force to overwrite)")]
    Exists(PathBuf),
    #[error("{0}")]
    Invalid(String),
    #[error("gradient check failed: {0}")]
    Gradcheck(String),
    #[error(transparent)]
    Core(#[from] hkgf_core::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// 2 for numerical failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        if self.is_numerical() {
            2
        } else {
            1
        }
    }

    fn is_numerical(&self) -> bool {
        use hkgf_core::Error as E;
        match self {
            CliError::Gradcheck(_) => true,
            CliError::Core(e) => matches!(e, E::NonFinite(_) | E::NanGradient(_)),
            _ => false,
        }
    }

    /// Single-line message with a machine-parsable prefix.
    pub fn report(&self) -> String {
        let kind = if self.is_numerical() { "numerical" } else { "validation" };
        let msg = self.to_string().replace('\n', " ");
        format!("error[{kind}]: {msg}")
    }
}
