use std::io;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),

    #[error("malformed wav: {0}")]
    MalformedWav(String),

    #[error("unsupported wav codec: {0}")]
    UnsupportedCodec(String),

    #[error("unsupported sample rate {0} Hz (expected {1} Hz)")]
    SampleRate(u32, u32),

    #[error("invalid size: {0}")]
    InvalidSize(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("unsupported model file version {0}")]
    UnsupportedVersion(u32),

    #[error("empty input: {0}")]
    Empty(String),
}

impl Error {
    /// Short machine-readable tag for the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io(_) => "io",
            Error::MalformedWav(_) => "malformed_wav",
            Error::UnsupportedCodec(_) => "unsupported_codec",
            Error::SampleRate(..) => "sample_rate",
            Error::InvalidSize(_) => "invalid_size",
            Error::ShapeMismatch(_) => "shape_mismatch",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::ModelFormat(_) => "model_format",
            Error::UnsupportedVersion(_) => "unsupported_version",
            Error::Empty(_) => "empty",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
