use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{what}: expected dimension {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("no speech frames")]
    NoSpeech,

    #[error("wav: {0}")]
    Wav(String),

    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this error: 2 config, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Numerical(_) => 4,
            Error::Stage { source, .. } => source.exit_code(),
            _ => 3,
        }
    }
}

/// Wraps a stage's failure with the stage name.
pub(crate) trait StageContext<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageContext<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| Error::Stage {
            stage,
            source: Box::new(e),
        })
    }
}
