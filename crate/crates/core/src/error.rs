use thiserror::Error;

/// Failure while parsing or tokenizing a JPEG stream.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum JpegError {
    #[error("stream does not start with an SOI marker")]
    MissingSoi,
    #[error("segment at offset {offset} declares {declared} bytes but only {available} remain")]
    TruncatedSegment {
        offset: usize,
        declared: usize,
        available: usize,
    },
    #[error("stream ended before an EOI marker")]
    UnexpectedEof,
    #[error("unsupported marker 0xFF{marker:02X} at offset {offset}")]
    UnsupportedMarker { marker: u8, offset: usize },
    #[error("expected a marker at offset {offset}, found byte 0x{found:02X}")]
    ExpectedMarker { offset: usize, found: u8 },
    #[error("malformed DHT segment: {0}")]
    MalformedDht(&'static str),
    #[error("Huffman code assignment overflows at length {length}")]
    OverfullCode { length: u8 },
    #[error("malformed frame header: {0}")]
    MalformedFrame(&'static str),
    #[error("malformed scan header: {0}")]
    MalformedScan(&'static str),
    #[error("stream contains no scan")]
    MissingScan,
    #[error("stream contains more than one scan")]
    MultipleScans,
    #[error("{class} Huffman table {id} used before it was defined")]
    UndefinedTable { class: &'static str, id: u8 },
    #[error("no Huffman code matches the bits at scan bit offset {bit_offset}")]
    InvalidCode { bit_offset: u64 },
    #[error("Huffman symbol 0x{symbol:02X} is invalid at scan bit offset {bit_offset}")]
    InvalidSymbol { symbol: u8, bit_offset: u64 },
    #[error("entropy-coded data ended inside MCU {mcu}")]
    PrematureEnd { mcu: u32 },
    #[error("restart marker at scan byte {byte_offset} does not match the restart interval")]
    RestartMisaligned { byte_offset: usize },
    #[error("{count} bytes of entropy-coded data follow the last MCU")]
    TrailingData { count: usize },
}

impl JpegError {
    /// Short kebab-case identifier, stable across releases.
    pub fn code(&self) -> &'static str {
        match self {
            JpegError::MissingSoi => "missing-soi",
            JpegError::TruncatedSegment { .. } => "truncated-segment",
            JpegError::UnexpectedEof => "unexpected-eof",
            JpegError::UnsupportedMarker { .. } => "unsupported-marker",
            JpegError::ExpectedMarker { .. } => "expected-marker",
            JpegError::MalformedDht(_) => "malformed-dht",
            JpegError::OverfullCode { .. } => "overfull-code",
            JpegError::MalformedFrame(_) => "malformed-frame",
            JpegError::MalformedScan(_) => "malformed-scan",
            JpegError::MissingScan => "missing-scan",
            JpegError::MultipleScans => "multiple-scans",
            JpegError::UndefinedTable { .. } => "undefined-table",
            JpegError::InvalidCode { .. } => "invalid-code",
            JpegError::InvalidSymbol { .. } => "invalid-symbol",
            JpegError::PrematureEnd { .. } => "premature-end",
            JpegError::RestartMisaligned { .. } => "restart-misaligned",
            JpegError::TrailingData { .. } => "trailing-data",
        }
    }
}

/// Failure while encrypting or classifying a JPEG stream.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CipherError {
    #[error(transparent)]
    Jpeg(#[from] JpegError),
    #[error("key is {len} bytes, at least {min} required", min = crate::cipher::MIN_KEY_LEN)]
    KeyTooShort { len: usize },
    #[error("key is {len} bytes, at most {max} allowed", max = crate::cipher::MAX_KEY_LEN)]
    KeyTooLong { len: usize },
    #[error("byte index {index} is outside the {len}-byte entropy segment")]
    IndexOutOfRange { index: usize, len: usize },
}

impl CipherError {
    pub fn code(&self) -> &'static str {
        match self {
            CipherError::Jpeg(e) => e.code(),
            CipherError::KeyTooShort { .. } => "key-too-short",
            CipherError::KeyTooLong { .. } => "key-too-long",
            CipherError::IndexOutOfRange { .. } => "index-out-of-range",
        }
    }
}
