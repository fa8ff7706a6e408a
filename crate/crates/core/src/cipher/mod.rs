//! Size-preserving encryption of the additional bits in a baseline scan.

mod classify;
mod keystream;

use std::fmt;
use std::str::FromStr;

pub use classify::{classify_byte, classify_bytes, ByteClass, ByteMap, ClassHistogram};
pub use keystream::{keystream_bits, Keystream};

use crate::bitstream::{tokenize_scan, Band, BaselineJpeg, ScanTokens};
use crate::error::{CipherError, JpegError};

pub const MIN_KEY_LEN: usize = 16;
pub const MAX_KEY_LEN: usize = 64;

/// Secret key material, 16 to 64 bytes.
#[derive(Clone, PartialEq, Eq)]
pub struct CipherKey(Vec<u8>);

impl CipherKey {
    pub fn new(bytes: impl Into<Vec<u8>>) -> Result<Self, CipherError> {
        let bytes = bytes.into();
        match bytes.len() {
            len if len < MIN_KEY_LEN => Err(CipherError::KeyTooShort { len }),
            len if len > MAX_KEY_LEN => Err(CipherError::KeyTooLong { len }),
            _ => Ok(CipherKey(bytes)),
        }
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Debug for CipherKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CipherKey({} bytes)", self.0.len())
    }
}

/// Which coefficient bands have their additional bits encrypted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Components {
    DcOnly,
    AcOnly,
    #[default]
    Both,
}

impl Components {
    pub fn enables(self, band: Band) -> bool {
        matches!(
            (self, band),
            (Components::Both, _) | (Components::DcOnly, Band::Dc) | (Components::AcOnly, Band::Ac)
        )
    }
}

impl FromStr for Components {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "dc" => Ok(Components::DcOnly),
            "ac" => Ok(Components::AcOnly),
            "both" => Ok(Components::Both),
            other => Err(format!("unknown components `{other}` (expected dc, ac or both)")),
        }
    }
}

impl fmt::Display for Components {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Components::DcOnly => "dc",
            Components::AcOnly => "ac",
            Components::Both => "both",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CipherConfig {
    pub key: CipherKey,
    pub components: Components,
}

impl CipherConfig {
    pub fn new(key: impl Into<Vec<u8>>, components: Components) -> Result<Self, CipherError> {
        Ok(CipherConfig {
            key: CipherKey::new(key)?,
            components,
        })
    }
}

/// Summary of one encryption (or analysis) pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncryptionReport {
    pub file_bytes: u64,
    /// Length of the entropy-coded segment.
    pub total_bytes: u64,
    pub class_histogram: ClassHistogram,
    pub additional_bits: u64,
    pub encrypted_bit_count: u64,
    /// Encrypted bits whose value actually changed.
    pub flipped_bit_count: u64,
    pub stuffed_byte_count: u64,
}

impl EncryptionReport {
    /// Fraction of all additional bits that fall in eligible bytes.
    pub fn encryptable_ratio(&self) -> f64 {
        if self.additional_bits == 0 {
            0.0
        } else {
            self.encrypted_bit_count as f64 / self.additional_bits as f64
        }
    }
}

impl fmt::Display for EncryptionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "file_bytes={}", self.file_bytes)?;
        writeln!(f, "entropy_bytes={}", self.total_bytes)?;
        for (class, n) in self.class_histogram.iter() {
            writeln!(f, "class.{}={}", class.name(), n)?;
        }
        writeln!(f, "additional_bits={}", self.additional_bits)?;
        writeln!(f, "encrypted_bits={}", self.encrypted_bit_count)?;
        writeln!(f, "flipped_bits={}", self.flipped_bit_count)?;
        writeln!(f, "encryptable_ratio={:.4}", self.encryptable_ratio())?;
        write!(f, "stuffed_bytes={}", self.stuffed_byte_count)
    }
}

/// A parsed, tokenized and classified JPEG.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub jpeg: BaselineJpeg,
    pub tokens: ScanTokens,
    pub bytes: ByteMap,
}

impl Analysis {
    /// Absolute bit offsets (from the start of the file, MSB first) that
    /// encryption would XOR, in keystream order.
    pub fn encrypted_bit_positions(&self) -> Vec<u64> {
        let base = self.jpeg.entropy.offset as u64 * 8;
        let mut out = Vec::new();
        for (i, &mask) in self.bytes.masks.iter().enumerate() {
            for j in 0..8 {
                if mask & (0x80 >> j) != 0 {
                    out.push(base + i as u64 * 8 + j);
                }
            }
        }
        out
    }

    pub fn report(&self, file_bytes: usize) -> EncryptionReport {
        EncryptionReport {
            file_bytes: file_bytes as u64,
            total_bytes: self.tokens.byte_len as u64,
            class_histogram: self.bytes.histogram,
            additional_bits: self.bytes.additional_bits,
            encrypted_bit_count: self.bytes.encrypted_bit_count(),
            flipped_bit_count: 0,
            stuffed_byte_count: self.tokens.stuffed.len() as u64,
        }
    }
}

pub fn analyze(stream: &[u8], components: Components) -> Result<Analysis, JpegError> {
    let jpeg = BaselineJpeg::parse(stream)?;
    let data = jpeg.entropy_bytes(stream);
    let tokens = tokenize_scan(data, &jpeg.scan, &jpeg.tables)?;
    let bytes = classify_bytes(data, &tokens, components);
    Ok(Analysis { jpeg, tokens, bytes })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CipherOutput {
    pub bytes: Vec<u8>,
    pub report: EncryptionReport,
}

/// Encrypts the eligible additional bits of `stream`.
///
/// The output has the same length as the input and differs only inside
/// eligible bytes. Running it again with the same configuration restores
/// the input.
pub fn encrypt_jpeg(stream: &[u8], config: &CipherConfig) -> Result<CipherOutput, CipherError> {
    let analysis = analyze(stream, config.components)?;
    let mut bytes = stream.to_vec();
    let base = analysis.jpeg.entropy.offset;
    let mut keystream = Keystream::new(config.key.as_bytes());
    let mut flipped = 0u64;
    for (i, &mask) in analysis.bytes.masks.iter().enumerate() {
        if mask == 0 {
            continue;
        }
        for j in 0..8 {
            let m = 0x80u8 >> j;
            if mask & m != 0 && keystream.next_bit() == 1 {
                bytes[base + i] ^= m;
                flipped += 1;
            }
        }
    }
    let mut report = analysis.report(stream.len());
    report.flipped_bit_count = flipped;
    Ok(CipherOutput { bytes, report })
}

/// Inverse of [`encrypt_jpeg`]; the transform is an involution.
pub fn decrypt_jpeg(stream: &[u8], config: &CipherConfig) -> Result<CipherOutput, CipherError> {
    encrypt_jpeg(stream, config)
}
