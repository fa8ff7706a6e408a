//! Baseline JPEG parsing down to the bit level of the entropy-coded segment.

pub mod frame;
pub mod huffman;
pub mod marker;
pub mod tokenize;

pub use frame::{BaselineJpeg, FrameComponent, FrameHeader, HuffmanTables, ScanComponent, ScanContext};
pub use huffman::{build_huffman_decoders, CodeEntry, HuffmanDecoder, TableClass};
pub use marker::{parse_markers, MarkerKind, MarkerSegment, Span};
pub use tokenize::{extend, tokenize_scan, Band, DecodedBlock, EntropyToken, ScanTokens, TokenKind};
