//! Size-preserving encryption for baseline JPEG files.
//!
//! The cipher XORs a keystream into the additional bits of the
//! entropy-coded segment, restricted to bytes that also hold Huffman-code
//! bits with at least one zero. Such a byte can never become `0xFF`, and an
//! `0xFF` byte is never touched, so byte stuffing and therefore file length
//! are unchanged. Markers, tables and Huffman codes stay bit-identical and
//! the output decodes with any baseline decoder.

pub mod bitstream;
pub mod cipher;
pub mod error;

pub use bitstream::{parse_markers, tokenize_scan, BaselineJpeg, Band, EntropyToken, ScanTokens, TokenKind};
pub use cipher::{
    analyze, classify_byte, decrypt_jpeg, encrypt_jpeg, keystream_bits, Analysis, ByteClass,
    CipherConfig, CipherKey, CipherOutput, Components, EncryptionReport,
};
pub use error::{CipherError, JpegError};
