use std::path::PathBuf;

/// Errors produced by the simulation, dataset and metrics layers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("configuration error: label {label} has no entry in the property table")]
    UnknownLabel { label: u8 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("image of size {found:?} is smaller than the required {required:?}")]
    ImageTooSmall {
        required: (usize, usize),
        found: (usize, usize),
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("{path}: {source}")]
    Format {
        path: PathBuf,
        #[source]
        source: FormatError,
    },

    #[error("missing file referenced by manifest: {}", path.display())]
    MissingFile { path: PathBuf },

    #[error("missing prediction for sample {sample_id}")]
    MissingPrediction { sample_id: String },

    #[error("unknown sample id {0}")]
    UnknownSample(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{}: {source}", path.display())]
    Toml {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },

    #[error("image export failed: {0}")]
    Image(#[from] image::ImageError),
}

/// Failures decoding the raw float grid format. Each variant maps to a
/// distinct, stable code.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FormatError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("header declares {declared} bytes of payload but {actual} are present")]
    DimensionMismatch { declared: usize, actual: usize },
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
}

impl FormatError {
    pub fn code(&self) -> u32 {
        match self {
            FormatError::MalformedHeader(_) => 1,
            FormatError::DimensionMismatch { .. } => 2,
            FormatError::ChecksumMismatch { .. } => 3,
        }
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user configuration rather than bad data.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::UnknownLabel { .. } | Error::InvalidArgument(_) | Error::Toml { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
