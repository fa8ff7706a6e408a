//! Marker-level segmentation of a JPEG byte stream.

use std::ops::Range;

use crate::error::JpegError;

/// A byte range inside the source stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Span {
    pub offset: usize,
    pub len: usize,
}

impl Span {
    pub fn new(offset: usize, len: usize) -> Self {
        Span { offset, len }
    }

    pub fn end(&self) -> usize {
        self.offset + self.len
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.end()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MarkerKind {
    Soi,
    Eoi,
    Sos,
    Sof0,
    Dht,
    Dqt,
    Dri,
    App(u8),
    Com,
    Rst(u8),
    Other,
}

impl MarkerKind {
    fn from_code(code: u8) -> Self {
        match code {
            0xD8 => MarkerKind::Soi,
            0xD9 => MarkerKind::Eoi,
            0xDA => MarkerKind::Sos,
            0xC0 => MarkerKind::Sof0,
            0xC4 => MarkerKind::Dht,
            0xDB => MarkerKind::Dqt,
            0xDD => MarkerKind::Dri,
            0xE0..=0xEF => MarkerKind::App(code - 0xE0),
            0xFE => MarkerKind::Com,
            0xD0..=0xD7 => MarkerKind::Rst(code - 0xD0),
            _ => MarkerKind::Other,
        }
    }

    /// Markers that carry no length field.
    pub fn is_standalone(code: u8) -> bool {
        matches!(code, 0x01 | 0xD0..=0xD9)
    }
}

/// One delimited segment of the stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkerSegment {
    /// Second byte of the marker code (the first is always 0xFF).
    pub marker: u8,
    pub kind: MarkerKind,
    /// Offset of the marker's 0xFF byte.
    pub offset: usize,
    /// Segment payload, excluding marker and length field.
    pub payload: Span,
    /// For SOS only: the entropy-coded data following the scan header.
    pub entropy: Option<Span>,
}

impl MarkerSegment {
    pub fn payload<'a>(&self, stream: &'a [u8]) -> &'a [u8] {
        &stream[self.payload.range()]
    }
}

fn is_unsupported_frame(code: u8) -> bool {
    // SOF1..SOF15 except DHT (C4), JPG (C8) and DAC (CC); DAC implies arithmetic coding.
    matches!(code, 0xC1..=0xC3 | 0xC5..=0xC7 | 0xC9..=0xCF)
}

/// Splits `stream` into marker segments, from SOI through EOI.
///
/// Bytes after EOI are ignored. The entropy-coded data of the scan is
/// attached to the SOS segment; stuffed `FF 00` pairs and restart markers
/// inside it do not end it.
pub fn parse_markers(stream: &[u8]) -> Result<Vec<MarkerSegment>, JpegError> {
    if stream.len() < 2 || stream[0] != 0xFF || stream[1] != 0xD8 {
        return Err(JpegError::MissingSoi);
    }
    let mut segments = vec![MarkerSegment {
        marker: 0xD8,
        kind: MarkerKind::Soi,
        offset: 0,
        payload: Span::new(2, 0),
        entropy: None,
    }];
    let mut pos = 2;
    let mut seen_scan = false;

    loop {
        if pos >= stream.len() {
            return Err(JpegError::UnexpectedEof);
        }
        if stream[pos] != 0xFF {
            return Err(JpegError::ExpectedMarker {
                offset: pos,
                found: stream[pos],
            });
        }
        // Fill bytes: any number of 0xFF may precede the marker code.
        while pos + 1 < stream.len() && stream[pos + 1] == 0xFF {
            pos += 1;
        }
        if pos + 1 >= stream.len() {
            return Err(JpegError::UnexpectedEof);
        }
        let code = stream[pos + 1];
        let kind = MarkerKind::from_code(code);

        if code == 0x00 || code == 0xD8 {
            return Err(JpegError::ExpectedMarker {
                offset: pos,
                found: code,
            });
        }
        if is_unsupported_frame(code) {
            return Err(JpegError::UnsupportedMarker {
                marker: code,
                offset: pos,
            });
        }

        if MarkerKind::is_standalone(code) {
            segments.push(MarkerSegment {
                marker: code,
                kind,
                offset: pos,
                payload: Span::new(pos + 2, 0),
                entropy: None,
            });
            pos += 2;
            if kind == MarkerKind::Eoi {
                return Ok(segments);
            }
            continue;
        }

        if pos + 4 > stream.len() {
            return Err(JpegError::TruncatedSegment {
                offset: pos,
                declared: 2,
                available: stream.len() - pos - 2,
            });
        }
        let declared = u16::from_be_bytes([stream[pos + 2], stream[pos + 3]]) as usize;
        let available = stream.len() - pos - 2;
        if declared < 2 || declared > available {
            return Err(JpegError::TruncatedSegment {
                offset: pos,
                declared,
                available,
            });
        }
        let payload = Span::new(pos + 4, declared - 2);
        let mut entropy = None;
        if kind == MarkerKind::Sos {
            if seen_scan {
                return Err(JpegError::MultipleScans);
            }
            seen_scan = true;
            let start = payload.end();
            let end = scan_entropy_end(stream, start)?;
            entropy = Some(Span::new(start, end - start));
        }
        segments.push(MarkerSegment {
            marker: code,
            kind,
            offset: pos,
            payload,
            entropy,
        });
        pos = match entropy {
            Some(span) => span.end(),
            None => payload.end(),
        };
    }
}

/// Returns the offset of the first marker that terminates entropy-coded data
/// starting at `start`.
fn scan_entropy_end(stream: &[u8], start: usize) -> Result<usize, JpegError> {
    let mut i = start;
    while i < stream.len() {
        if stream[i] == 0xFF {
            match stream.get(i + 1) {
                None => return Err(JpegError::UnexpectedEof),
                Some(0x00) | Some(0xD0..=0xD7) => i += 2,
                Some(_) => return Ok(i),
            }
        } else {
            i += 1;
        }
    }
    Err(JpegError::UnexpectedEof)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(stream: &[u8]) -> Vec<MarkerKind> {
        parse_markers(stream).unwrap().iter().map(|s| s.kind).collect()
    }

    #[test]
    fn minimal_stream() {
        assert_eq!(seg(&[0xFF, 0xD8, 0xFF, 0xD9]), vec![MarkerKind::Soi, MarkerKind::Eoi]);
    }

    #[test]
    fn missing_soi() {
        assert_eq!(parse_markers(&[0xFF, 0xD9]), Err(JpegError::MissingSoi));
        assert_eq!(parse_markers(&[]), Err(JpegError::MissingSoi));
    }

    #[test]
    fn missing_eoi() {
        assert_eq!(parse_markers(&[0xFF, 0xD8]), Err(JpegError::UnexpectedEof));
        let stream = [0xFF, 0xD8, 0xFF, 0xFE, 0x00, 0x03, b'x'];
        assert_eq!(parse_markers(&stream), Err(JpegError::UnexpectedEof));
    }

    #[test]
    fn truncated_segment() {
        let stream = [0xFF, 0xD8, 0xFF, 0xFE, 0x00, 0x09, b'x', 0xFF, 0xD9];
        assert!(matches!(
            parse_markers(&stream),
            Err(JpegError::TruncatedSegment { offset: 2, declared: 9, .. })
        ));
    }

    #[test]
    fn rejects_progressive_frame() {
        let stream = [0xFF, 0xD8, 0xFF, 0xC2, 0x00, 0x02, 0xFF, 0xD9];
        assert_eq!(
            parse_markers(&stream),
            Err(JpegError::UnsupportedMarker { marker: 0xC2, offset: 2 })
        );
    }

    #[test]
    fn payload_spans_match_length_field() {
        let stream = [
            0xFF, 0xD8, 0xFF, 0xFE, 0x00, 0x05, b'a', b'b', b'c', 0xFF, 0xFF, 0xE1, 0x00, 0x02,
            0xFF, 0xD9,
        ];
        let segs = parse_markers(&stream).unwrap();
        assert_eq!(segs.len(), 4);
        assert_eq!(segs[1].kind, MarkerKind::Com);
        assert_eq!(segs[1].payload(&stream), b"abc");
        // fill byte before APP1
        assert_eq!(segs[2].kind, MarkerKind::App(1));
        assert_eq!(segs[2].offset, 10);
        assert_eq!(segs[2].payload.len, 0);
    }

    #[test]
    fn entropy_span_skips_stuffing_and_restarts() {
        let stream = [
            0xFF, 0xD8, 0xFF, 0xDA, 0x00, 0x03, 0x00, // SOS with 1-byte payload
            0x12, 0xFF, 0x00, 0x34, 0xFF, 0xD0, 0x56, // entropy data
            0xFF, 0xD9,
        ];
        let segs = parse_markers(&stream).unwrap();
        assert_eq!(segs.len(), 3);
        assert_eq!(segs[1].entropy, Some(Span::new(7, 7)));
        assert_eq!(segs[2].kind, MarkerKind::Eoi);
    }

    #[test]
    fn rejects_second_scan() {
        let stream = [
            0xFF, 0xD8, 0xFF, 0xDA, 0x00, 0x02, 0x11, 0xFF, 0xDA, 0x00, 0x02, 0x22, 0xFF, 0xD9,
        ];
        assert_eq!(parse_markers(&stream), Err(JpegError::MultipleScans));
    }

    #[test]
    fn trailing_bytes_after_eoi_are_ignored() {
        let stream = [0xFF, 0xD8, 0xFF, 0xD9, 0x00, 0x01];
        assert_eq!(parse_markers(&stream).unwrap().len(), 2);
    }
}
