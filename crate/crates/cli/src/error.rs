use std::path::PathBuf;

use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const IO: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const SOLVER: i32 = 3;
    pub const GRADCHECK: i32 = 4;
    pub const MISMATCH: i32 = 5;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] flexscatter::Error),

    #[error("gradient check failed: worst relative error {worst:.3e} exceeds {tolerance:.0e}")]
    Gradcheck { worst: f64, tolerance: f64 },

    #[error("rerun differs from the manifest in: {}", .0.join(", "))]
    Mismatch(Vec<String>),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        use flexscatter::Error as E;
        match self {
            CliError::Io { .. } => exit::IO,
            CliError::Config(_) => exit::CONFIG,
            CliError::Gradcheck { .. } => exit::GRADCHECK,
            CliError::Mismatch(_) => exit::MISMATCH,
            CliError::Core(e) if e.is_numerical() => exit::SOLVER,
            CliError::Core(E::Io(_)) => exit::IO,
            CliError::Core(E::Sample { source, .. }) if matches!(**source, E::Io(_)) => exit::IO,
            CliError::Core(_) => exit::CONFIG,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes() {
        assert_eq!(CliError::from(flexscatter::Error::Cholesky).exit_code(), exit::SOLVER);
        assert_eq!(CliError::from(flexscatter::Error::Shape("x".into())).exit_code(), exit::CONFIG);
        let io = std::io::Error::other("disk");
        assert_eq!(CliError::from(flexscatter::Error::Io(io)).exit_code(), exit::IO);
        let nested = flexscatter::Error::Sample {
            index: 3,
            source: Box::new(flexscatter::Error::ResonantSingular),
        };
        assert_eq!(CliError::from(nested).exit_code(), exit::SOLVER);
    }
}
