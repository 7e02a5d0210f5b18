use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flag values; exit code 2.
    #[error("{0}")]
    Usage(String),

    #[error("sample {id}: {source}")]
    Sample {
        id: String,
        #[source]
        source: msrd::Error,
    },

    #[error(transparent)]
    Core(#[from] msrd::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Usage("x".into()).exit_code(), 2);
        let io = CliError::Io {
            path: "a".into(),
            source: std::io::Error::other("gone"),
        };
        assert_eq!(io.exit_code(), 1);
        assert_eq!(io.to_string(), "a: gone");
    }
}
