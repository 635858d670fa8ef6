use thiserror::Error;

/// Every failure the library can report.
///
/// Variants are grouped loosely by the subsystem that raises them, but they
/// share one type so that the codec can propagate model and coder errors
/// without wrapping.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch on {axis}: expected {expected}, got {actual}")]
    DimensionMismatch {
        axis: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid model spec: {0}")]
    InvalidSpec(String),

    #[error("non-finite value in {0}; model weights are likely corrupted")]
    NonFinite(&'static str),

    #[error("operation requires the {expected} variant, model is {actual}")]
    UnsupportedVariant {
        expected: &'static str,
        actual: &'static str,
    },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: Vec<u8> },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u8),

    #[error("truncated input: {0}")]
    Truncated(&'static str),

    #[error("layer {layer} has wrong shape: expected {expected} values, found {found}")]
    ShapeMismatch {
        layer: usize,
        expected: usize,
        found: usize,
    },

    #[error("{0} trailing bytes after weight data")]
    TrailingBytes(usize),

    #[error("invalid frequency table: {0}")]
    InvalidPmf(String),

    #[error("coded stream is corrupt: {0}")]
    CorruptStream(&'static str),

    #[error("lane count mismatch: stream has {expected} lanes, decoder was given {actual}")]
    LaneMismatch { expected: usize, actual: usize },

    #[error("corrupt container header: {0}")]
    CorruptHeader(String),

    #[error("model fingerprint mismatch: container {container:016x}, model {model:016x}")]
    FingerprintMismatch { container: u64, model: u64 },

    #[error("image {height}x{width} exceeds the 65535 limit of the container")]
    ImageTooLarge { height: usize, width: usize },

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("empty score list: {0}")]
    EmptyScores(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;
