use thiserror::Error;

/// Errors raised by the compression toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("truncated file: needed {needed} bytes at offset {offset}")]
    TruncatedFile { offset: usize, needed: usize },
    #[error("{0} trailing bytes after checksum")]
    TrailingBytes(usize),
    #[error("malformed container: {0}")]
    Malformed(String),
    #[error("invalid tensor {name:?}: {reason}")]
    InvalidTensor { name: String, reason: String },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("unsupported tensor rank {0} (expected 1, 2 or 4)")]
    UnsupportedRank(usize),
    #[error("block value count mismatch: expected {expected}, got {actual}")]
    CountMismatch { expected: usize, actual: usize },
    #[error("need at least {k} blocks for K = {k}, have {blocks}")]
    TooFewBlocks { k: usize, blocks: usize },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("index {index} does not fit in {bits} bits (or exceeds K)")]
    IndexOverflow { index: u64, bits: u32 },
    #[error("bitstream length mismatch: expected {expected} bytes, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
