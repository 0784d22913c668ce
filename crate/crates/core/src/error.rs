use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("decode error at byte {offset}: {reason}")]
    Decode { offset: usize, reason: String },

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("expected {expected} image, got {actual}")]
    ColorSpace {
        expected: &'static str,
        actual: &'static str,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// The pilot grid could not be located in the analysed image.
    #[error("pilot not found: {0}")]
    DetectionFailure(String),

    #[error("degenerate lattice: detected directions differ by {0:.3} degrees")]
    DegenerateLattice(f64),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    pub fn is_detection_failure(&self) -> bool {
        matches!(self, Error::DetectionFailure(_) | Error::DegenerateLattice(_))
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
