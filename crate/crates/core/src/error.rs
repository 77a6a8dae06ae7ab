use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("latent shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },

    #[error("layer index {index} out of range for {n_layers} layers")]
    LayerOutOfRange { index: usize, n_layers: usize },

    #[error("channel block (layer {layer}, start {start}, len {len}) does not fit a {n_layers}x{n_channels} latent")]
    BlockOutOfRange {
        layer: usize,
        start: usize,
        len: usize,
        n_layers: usize,
        n_channels: usize,
    },

    #[error("mask value {value} at flat index {index} is outside [0, 1]")]
    MaskOutOfRange { index: usize, value: f64 },

    #[error("non-finite value at flat index {0}")]
    NonFinite(usize),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown region `{0}`")]
    UnknownRegion(String),

    #[error("duplicate id `{id}` ({first} and {second})")]
    DuplicateId {
        id: String,
        first: PathBuf,
        second: PathBuf,
    },

    #[error("backend error: {0}")]
    Backend(String),

    #[error("operation not supported by this backend: {0}")]
    Unsupported(String),

    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },

    #[error("inconsistent input: {0}")]
    Inconsistent(String),

    #[error("malformed file {path}: {detail}")]
    Format { path: PathBuf, detail: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            detail: detail.into(),
        }
    }
}
