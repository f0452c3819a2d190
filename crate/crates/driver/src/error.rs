use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{module}::{operation} failed: {source}")]
    Numeric {
        module: &'static str,
        operation: &'static str,
        #[source]
        source: zerotemp_core::Error,
    },
    #[error("missing artifact {artifact}; run `{needs}` first")]
    MissingArtifact { artifact: String, needs: &'static str },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric { .. } => 3,
            CliError::MissingArtifact { .. } => 4,
            CliError::Io { .. } => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

/// Tags a core error with the module and operation it came from.
pub(crate) trait Context<T> {
    fn ctx(self, module: &'static str, operation: &'static str) -> Result<T>;
}

impl<T> Context<T> for zerotemp_core::Result<T> {
    fn ctx(self, module: &'static str, operation: &'static str) -> Result<T> {
        self.map_err(|source| CliError::Numeric {
            module,
            operation,
            source,
        })
    }
}
