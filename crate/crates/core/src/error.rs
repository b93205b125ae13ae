use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid density operator: {0}")]
    InvalidState(String),
    #[error("label matching failed: {0}")]
    LabelMatch(String),
    #[error("integration failed: {0}")]
    Integration(String),
    #[error("unsupported noise mode: {0}")]
    Mode(String),
    #[error("malformed generator: {0}")]
    Generator(String),
    #[error("bath too large: {0}")]
    Size(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by bad input rather than numerical failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Dimension(_)
                | Error::Domain(_)
                | Error::InvalidState(_)
                | Error::Mode(_)
                | Error::Size(_)
                | Error::Config(_)
        )
    }
}
