use gaussian_polymer::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}; lower the horizon, sample count or number of walks")]
    Capacity(CoreError),
    #[error(transparent)]
    Module(CoreError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<CoreError> for HarnessError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Capacity { .. } => HarnessError::Capacity(e),
            other => HarnessError::Module(other),
        }
    }
}

impl HarnessError {
    /// 2 for bad input of any kind, 3 for capacity.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Capacity(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
