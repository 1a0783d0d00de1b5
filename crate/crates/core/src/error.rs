use thiserror::Error;

/// Errors raised anywhere in the jamlab core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("size mismatch: {0}")]
    Size(String),
    #[error("cannot compose signals: {0}")]
    Composition(String),
    #[error("cannot normalize: {0}")]
    Normalization(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("model error: {0}")]
    Model(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

macro_rules! bail {
    ($kind:ident, $($arg:tt)*) => {
        return Err($crate::error::Error::$kind(format!($($arg)*)))
    };
}
pub(crate) use bail;
