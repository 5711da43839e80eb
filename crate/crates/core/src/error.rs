use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("point outside the sampling domain: {0}")]
    Domain(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("degenerate features: {0}")]
    DegenerateFeature(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("unreachable target: {0}")]
    Unreachable(String),
    #[error("invalid seed: {0}")]
    InvalidSeed(String),
    #[error("constrained region too tight: {0}")]
    MaskTooTight(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("image codec error: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    /// Stable machine-readable code, used by the CLI exit path and the HTTP service.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid-input",
            Error::Domain(_) => "domain",
            Error::Config(_) => "configuration",
            Error::DegenerateFeature(_) => "degenerate-feature",
            Error::Numeric(_) => "numeric",
            Error::Unreachable(_) => "unreachable-target",
            Error::InvalidSeed(_) => "invalid-seed",
            Error::MaskTooTight(_) => "mask-too-tight",
            Error::Io(_) => "io",
            Error::Image(_) => "image-codec",
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

pub(crate) fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}
