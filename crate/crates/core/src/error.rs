use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("singular system: {0}")]
    Singular(String),
    #[error("insufficient information: {0}")]
    InsufficientInformation(String),
    #[error("corrupted data: {0}")]
    Corruption(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("transport error: {0}")]
    Transport(#[from] io::Error),
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
    #[error("internal consistency error: {0}")]
    Internal(String),
    #[error("retrieval failed: {0}")]
    Retrieval(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn params<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Params(msg.into()))
}
