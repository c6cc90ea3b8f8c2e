use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("no boundary: class {class} has an empty boundary set (absent or fills the image)")]
    NoBoundary { class: u8 },

    #[error("unsupported distance-map variant: {0}")]
    UnsupportedVariant(String),

    #[error("layer `{layer}`: {detail}")]
    Layer { layer: String, detail: String },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("bad config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("format error in {path}: {detail}")]
    Format { path: String, detail: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            detail: detail.into(),
        }
    }
}
