use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] tdip::Error),

    /// Self-test or acceptance checks that ran but did not pass.
    #[error("{0} check(s) failed")]
    Checks(usize),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// 2 config, 3 i/o or malformed input files, 4 numerical aborts and
    /// failed checks, 1 anything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Checks(_) => 4,
            CliError::Core(e) => match e {
                tdip::Error::InvalidArgument(_) => 2,
                tdip::Error::Io { .. } | tdip::Error::Format { .. } => 3,
                tdip::Error::NonFinite { .. } | tdip::Error::Diverged { .. } => 4,
                tdip::Error::Shape(_) => 1,
            },
        }
    }
}
