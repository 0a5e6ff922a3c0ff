use std::io;
use std::sync::Arc;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Crate-wide error type.
///
/// Cloneable so a single failed block load can be propagated to every
/// caller waiting on the same in-flight fetch.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("no keys")]
    NoKeys,
    #[error("keys not strictly sorted")]
    KeysNotSorted,
    #[error("degenerate model: encoded keys have zero variance")]
    DegenerateModel,
    #[error("not a table file: {0}")]
    NotATable(String),
    #[error("corrupt index: {0}")]
    CorruptIndex(String),
    #[error("corrupt index block {0}")]
    CorruptIndexBlock(u32),
    #[error("corrupt block {0}: checksum mismatch")]
    CorruptBlock(u64),
    #[error("corrupt locator: {0}")]
    CorruptLocator(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("config mismatch: {0}")]
    ConfigMismatch(String),
    #[error("correctness failure: {0}")]
    Correctness(String),
    #[error("io error: {0}")]
    Io(Arc<io::Error>),
}

impl From<io::Error> for Error {
    fn from(e: io::Error) -> Self {
        Error::Io(Arc::new(e))
    }
}

impl Error {
    /// Exit-code class: true for data/corruption errors (as opposed to
    /// usage errors).
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::InvalidInput(_) | Error::ConfigMismatch(_))
    }
}
