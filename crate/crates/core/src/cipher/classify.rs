//! Per-byte classification of the entropy-coded segment.

use crate::bitstream::{ScanTokens, TokenKind};
use crate::cipher::Components;
use crate::error::CipherError;

/// Role of one entropy-segment byte with respect to encryption.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ByteClass {
    /// Holds Huffman-code bits and no additional bits.
    AllHuffman,
    /// Holds additional bits and no Huffman-code bits.
    AllAdditional,
    /// The `00` inserted after an `FF` data byte.
    StuffedZero,
    /// Holds both, but every Huffman-code bit in it is 1.
    AllOnesHuffman,
    /// Holds both, at least one Huffman-code bit is 0, and some of its
    /// additional bits belong to an enabled band. Only these are encrypted.
    Eligible,
    /// Like `Eligible`, except all its additional bits belong to a band the
    /// configuration leaves in the clear.
    ComponentDisabled,
    /// Restart-marker bytes and bytes made only of padding.
    NonData,
}

impl ByteClass {
    pub const ALL: [ByteClass; 7] = [
        ByteClass::AllHuffman,
        ByteClass::AllAdditional,
        ByteClass::StuffedZero,
        ByteClass::AllOnesHuffman,
        ByteClass::Eligible,
        ByteClass::ComponentDisabled,
        ByteClass::NonData,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ByteClass::AllHuffman => "all_huffman",
            ByteClass::AllAdditional => "all_additional",
            ByteClass::StuffedZero => "stuffed_zero",
            ByteClass::AllOnesHuffman => "all_ones_huffman",
            ByteClass::Eligible => "eligible",
            ByteClass::ComponentDisabled => "component_disabled",
            ByteClass::NonData => "non_data",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// Count of bytes per class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClassHistogram([u64; 7]);

impl ClassHistogram {
    pub fn get(&self, class: ByteClass) -> u64 {
        self.0[class.index()]
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ByteClass, u64)> + '_ {
        ByteClass::ALL.iter().map(move |&c| (c, self.get(c)))
    }

    fn add(&mut self, class: ByteClass) {
        self.0[class.index()] += 1;
    }
}

/// Bit masks of one byte, MSB = first bit in stream order.
#[derive(Debug, Clone, Copy, Default)]
struct ByteBits {
    huff: u8,
    additional: u8,
    enabled: u8,
    stuffed: bool,
    restart: bool,
}

impl ByteBits {
    fn class(&self, value: u8) -> ByteClass {
        if self.stuffed {
            return ByteClass::StuffedZero;
        }
        if self.restart {
            return ByteClass::NonData;
        }
        match (self.huff != 0, self.additional != 0) {
            (false, false) => ByteClass::NonData,
            (true, false) => ByteClass::AllHuffman,
            (false, true) => ByteClass::AllAdditional,
            (true, true) if value & self.huff == self.huff => ByteClass::AllOnesHuffman,
            (true, true) if self.enabled != 0 => ByteClass::Eligible,
            (true, true) => ByteClass::ComponentDisabled,
        }
    }
}

/// Classes and encryption masks for every byte of an entropy segment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ByteMap {
    pub classes: Vec<ByteClass>,
    /// Bits to encrypt in each byte; zero unless the byte is `Eligible`.
    pub masks: Vec<u8>,
    pub histogram: ClassHistogram,
    /// All additional bits in the segment, whatever their byte class.
    pub additional_bits: u64,
}

impl ByteMap {
    pub fn encrypted_bit_count(&self) -> u64 {
        self.masks.iter().map(|m| m.count_ones() as u64).sum()
    }
}

fn collect_bits(tokens: &ScanTokens, components: Components) -> (Vec<ByteBits>, u64) {
    let mut bytes = vec![ByteBits::default(); tokens.byte_len];
    let mut additional_bits = 0u64;
    for t in tokens.iter() {
        match t.kind {
            TokenKind::StuffedByte => bytes[(t.bit_start / 8) as usize].stuffed = true,
            TokenKind::RestartMarker => {
                let b = (t.bit_start / 8) as usize;
                bytes[b].restart = true;
                bytes[b + 1].restart = true;
            }
            TokenKind::PadBits => {}
            TokenKind::HuffCode | TokenKind::AdditionalBits => {
                let enabled = t.band.is_some_and(|b| components.enables(b));
                if t.kind == TokenKind::AdditionalBits {
                    additional_bits += t.bit_len as u64;
                }
                for p in tokens.bit_positions(t) {
                    let byte = &mut bytes[(p / 8) as usize];
                    let m = 0x80u8 >> (p % 8);
                    if t.kind == TokenKind::HuffCode {
                        byte.huff |= m;
                    } else {
                        byte.additional |= m;
                        if enabled {
                            byte.enabled |= m;
                        }
                    }
                }
            }
        }
    }
    (bytes, additional_bits)
}

/// Classifies every byte of `data`, the raw segment `tokens` was built from.
pub fn classify_bytes(data: &[u8], tokens: &ScanTokens, components: Components) -> ByteMap {
    let (bits, additional_bits) = collect_bits(tokens, components);
    let mut classes = Vec::with_capacity(bits.len());
    let mut masks = Vec::with_capacity(bits.len());
    let mut histogram = ClassHistogram::default();
    for (b, &value) in bits.iter().zip(data) {
        let class = b.class(value);
        histogram.add(class);
        classes.push(class);
        masks.push(if class == ByteClass::Eligible { b.enabled } else { 0 });
    }
    ByteMap {
        classes,
        masks,
        histogram,
        additional_bits,
    }
}

/// Class of a single byte of the segment.
pub fn classify_byte(
    data: &[u8],
    byte_index: usize,
    tokens: &ScanTokens,
    components: Components,
) -> Result<ByteClass, CipherError> {
    if byte_index >= tokens.byte_len || byte_index >= data.len() {
        return Err(CipherError::IndexOutOfRange {
            index: byte_index,
            len: tokens.byte_len.min(data.len()),
        });
    }
    let lo = byte_index as u64 * 8;
    let hi = lo + 8;
    let mut b = ByteBits::default();
    // Tokens are sorted by start; a data token's raw extent is at most
    // 16 code bits plus one crossed stuffed byte, so look back far enough.
    let first = tokens.partition_point(|t| t.bit_start + 32 < lo);
    for t in tokens[first..].iter().take_while(|t| t.bit_start < hi) {
        match t.kind {
            TokenKind::StuffedByte => b.stuffed |= t.bit_start == lo,
            TokenKind::RestartMarker => b.restart |= t.bit_start == lo || t.bit_start + 8 == lo,
            TokenKind::PadBits => {}
            TokenKind::HuffCode | TokenKind::AdditionalBits => {
                let enabled = t.band.is_some_and(|band| components.enables(band));
                for p in tokens.bit_positions(t).filter(|p| (lo..hi).contains(p)) {
                    let m = 0x80u8 >> (p % 8);
                    if t.kind == TokenKind::HuffCode {
                        b.huff |= m;
                    } else {
                        b.additional |= m;
                        if enabled {
                            b.enabled |= m;
                        }
                    }
                }
            }
        }
    }
    Ok(b.class(data[byte_index]))
}
