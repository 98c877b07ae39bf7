use thiserror::Error;

/// Errors shared across the library.
#[derive(Debug, Error)]
pub enum DdpError {
    #[error("index out of bounds: {0}")]
    IndexOutOfBounds(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("layer is not of the required kind: {0}")]
    InvalidLayerKind(String),

    #[error("manifest invalid: {0}")]
    ManifestInvalid(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl DdpError {
    /// Stable machine-readable tag for the error category.
    pub fn kind(&self) -> &'static str {
        match self {
            DdpError::IndexOutOfBounds(_) => "IndexOutOfBounds",
            DdpError::ShapeMismatch(_) => "ShapeMismatch",
            DdpError::NumericalFailure(_) => "NumericalFailure",
            DdpError::InvalidInput(_) => "InvalidInput",
            DdpError::InsufficientSamples { .. } => "InsufficientSamples",
            DdpError::InvalidParameter(_) => "InvalidParameter",
            DdpError::InvalidLayerKind(_) => "InvalidLayerKind",
            DdpError::ManifestInvalid(_) => "ManifestInvalid",
            DdpError::Io(_) => "IoError",
        }
    }
}

pub type Result<T> = std::result::Result<T, DdpError>;
