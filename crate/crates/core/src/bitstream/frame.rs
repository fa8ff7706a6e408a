//! Frame and scan headers, and the scan context that drives tokenization.

use crate::bitstream::huffman::{build_huffman_decoders, HuffmanDecoder, TableClass};
use crate::bitstream::marker::{parse_markers, MarkerKind, MarkerSegment, Span};
use crate::error::JpegError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameComponent {
    pub id: u8,
    pub h: u8,
    pub v: u8,
    pub quant_table: u8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameHeader {
    pub precision: u8,
    pub height: u16,
    pub width: u16,
    pub components: Vec<FrameComponent>,
}

impl FrameHeader {
    pub fn parse(payload: &[u8]) -> Result<Self, JpegError> {
        if payload.len() < 6 {
            return Err(JpegError::MalformedFrame("header shorter than 6 bytes"));
        }
        let precision = payload[0];
        let height = u16::from_be_bytes([payload[1], payload[2]]);
        let width = u16::from_be_bytes([payload[3], payload[4]]);
        let count = payload[5] as usize;
        if precision != 8 {
            return Err(JpegError::MalformedFrame("sample precision is not 8"));
        }
        if height == 0 {
            return Err(JpegError::MalformedFrame("height defined by DNL is not supported"));
        }
        if width == 0 {
            return Err(JpegError::MalformedFrame("zero width"));
        }
        if count == 0 || count > 4 {
            return Err(JpegError::MalformedFrame("component count outside 1..=4"));
        }
        if payload.len() != 6 + 3 * count {
            return Err(JpegError::MalformedFrame("length does not match component count"));
        }
        let mut components = Vec::with_capacity(count);
        for c in payload[6..].chunks_exact(3) {
            let (h, v) = (c[1] >> 4, c[1] & 0x0F);
            if !(1..=4).contains(&h) || !(1..=4).contains(&v) {
                return Err(JpegError::MalformedFrame("sampling factor outside 1..=4"));
            }
            if components.iter().any(|k: &FrameComponent| k.id == c[0]) {
                return Err(JpegError::MalformedFrame("duplicate component id"));
            }
            components.push(FrameComponent {
                id: c[0],
                h,
                v,
                quant_table: c[2],
            });
        }
        Ok(FrameHeader {
            precision,
            height,
            width,
            components,
        })
    }

    pub fn max_h(&self) -> u8 {
        self.components.iter().map(|c| c.h).max().unwrap_or(1)
    }

    pub fn max_v(&self) -> u8 {
        self.components.iter().map(|c| c.v).max().unwrap_or(1)
    }
}

/// One component as it participates in the scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScanComponent {
    pub id: u8,
    /// Index into the frame's component list.
    pub frame_index: usize,
    /// Blocks per MCU horizontally and vertically (1×1 in non-interleaved scans).
    pub h: u8,
    pub v: u8,
    pub dc_table: u8,
    pub ac_table: u8,
    /// Width and height of the component's block grid.
    pub blocks_wide: u32,
    pub blocks_high: u32,
}

impl ScanComponent {
    pub fn blocks_per_mcu(&self) -> u32 {
        self.h as u32 * self.v as u32
    }
}

/// Everything the tokenizer needs to walk the MCU structure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScanContext {
    pub components: Vec<ScanComponent>,
    /// MCUs between restart markers; 0 disables restarts.
    pub restart_interval: u16,
    pub mcus_wide: u32,
    pub mcus_high: u32,
    pub mcu_count: u32,
}

impl ScanContext {
    pub fn new(frame: &FrameHeader, sos: &[u8], restart_interval: u16) -> Result<Self, JpegError> {
        if sos.is_empty() {
            return Err(JpegError::MalformedScan("empty header"));
        }
        let count = sos[0] as usize;
        if count == 0 || count > 4 {
            return Err(JpegError::MalformedScan("component count outside 1..=4"));
        }
        if sos.len() != 1 + 2 * count + 3 {
            return Err(JpegError::MalformedScan("length does not match component count"));
        }
        let tail = &sos[1 + 2 * count..];
        if tail[0] != 0 || tail[1] != 63 || tail[2] != 0 {
            return Err(JpegError::MalformedScan("spectral selection or approximation is not baseline"));
        }

        let max_h = frame.max_h() as u32;
        let max_v = frame.max_v() as u32;
        let width = frame.width as u32;
        let height = frame.height as u32;
        let interleaved = count > 1;

        let mut components = Vec::with_capacity(count);
        for c in sos[1..1 + 2 * count].chunks_exact(2) {
            let frame_index = frame
                .components
                .iter()
                .position(|f| f.id == c[0])
                .ok_or(JpegError::MalformedScan("component not declared in frame"))?;
            if components.iter().any(|k: &ScanComponent| k.id == c[0]) {
                return Err(JpegError::MalformedScan("duplicate component in scan"));
            }
            let fc = frame.components[frame_index];
            let (dc_table, ac_table) = (c[1] >> 4, c[1] & 0x0F);
            if dc_table > 3 || ac_table > 3 {
                return Err(JpegError::MalformedScan("table selector above 3"));
            }
            let comp_w = (width * fc.h as u32).div_ceil(max_h);
            let comp_h = (height * fc.v as u32).div_ceil(max_v);
            let (h, v) = if interleaved { (fc.h, fc.v) } else { (1, 1) };
            components.push(ScanComponent {
                id: c[0],
                frame_index,
                h,
                v,
                dc_table,
                ac_table,
                blocks_wide: comp_w.div_ceil(8),
                blocks_high: comp_h.div_ceil(8),
            });
        }

        let (mcus_wide, mcus_high) = if interleaved {
            if components.iter().map(|c| c.blocks_per_mcu()).sum::<u32>() > 10 {
                return Err(JpegError::MalformedScan("more than 10 blocks per MCU"));
            }
            (width.div_ceil(8 * max_h), height.div_ceil(8 * max_v))
        } else {
            (components[0].blocks_wide, components[0].blocks_high)
        };

        Ok(ScanContext {
            components,
            restart_interval,
            mcus_wide,
            mcus_high,
            mcu_count: mcus_wide * mcus_high,
        })
    }

    pub fn blocks_per_mcu(&self) -> u32 {
        self.components.iter().map(|c| c.blocks_per_mcu()).sum()
    }

    pub fn is_interleaved(&self) -> bool {
        self.components.len() > 1
    }
}

/// The Huffman tables in force when the scan starts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HuffmanTables {
    dc: [Option<HuffmanDecoder>; 4],
    ac: [Option<HuffmanDecoder>; 4],
}

impl HuffmanTables {
    pub fn insert(&mut self, decoder: HuffmanDecoder) {
        let id = decoder.table_id as usize;
        match decoder.table_class {
            TableClass::Dc => self.dc[id] = Some(decoder),
            TableClass::Ac => self.ac[id] = Some(decoder),
        }
    }

    pub fn get(&self, class: TableClass, id: u8) -> Option<&HuffmanDecoder> {
        let slot = match class {
            TableClass::Dc => self.dc.get(id as usize),
            TableClass::Ac => self.ac.get(id as usize),
        };
        slot.and_then(|d| d.as_ref())
    }

    fn require(&self, class: TableClass, id: u8) -> Result<&HuffmanDecoder, JpegError> {
        self.get(class, id).ok_or(JpegError::UndefinedTable {
            class: class.name(),
            id,
        })
    }
}

/// A parsed single-scan baseline JPEG.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BaselineJpeg {
    pub segments: Vec<MarkerSegment>,
    pub frame: FrameHeader,
    pub scan: ScanContext,
    pub tables: HuffmanTables,
    /// Entropy-coded data of the scan, as a span of the source stream.
    pub entropy: Span,
}

impl BaselineJpeg {
    /// Parses markers, headers and the Huffman tables preceding the scan.
    pub fn parse(stream: &[u8]) -> Result<Self, JpegError> {
        let segments = parse_markers(stream)?;
        let mut frame = None;
        let mut tables = HuffmanTables::default();
        let mut restart_interval = 0u16;
        let mut scan = None;

        for seg in &segments {
            match seg.kind {
                MarkerKind::Sof0 => {
                    if frame.is_some() {
                        return Err(JpegError::MalformedFrame("more than one frame header"));
                    }
                    frame = Some(FrameHeader::parse(seg.payload(stream))?);
                }
                MarkerKind::Dht if scan.is_none() => {
                    for d in build_huffman_decoders(seg.payload(stream))? {
                        tables.insert(d);
                    }
                }
                MarkerKind::Dri if scan.is_none() => {
                    let p = seg.payload(stream);
                    if p.len() != 2 {
                        return Err(JpegError::MalformedScan("DRI payload is not 2 bytes"));
                    }
                    restart_interval = u16::from_be_bytes([p[0], p[1]]);
                }
                MarkerKind::Sos => {
                    let frame = frame
                        .as_ref()
                        .ok_or(JpegError::MalformedScan("scan before frame header"))?;
                    let ctx = ScanContext::new(frame, seg.payload(stream), restart_interval)?;
                    for c in &ctx.components {
                        tables.require(TableClass::Dc, c.dc_table)?;
                        tables.require(TableClass::Ac, c.ac_table)?;
                    }
                    scan = Some((ctx, seg.entropy.unwrap_or_default()));
                }
                _ => {}
            }
        }

        let (scan, entropy) = scan.ok_or(JpegError::MissingScan)?;
        Ok(BaselineJpeg {
            segments,
            frame: frame.ok_or(JpegError::MissingScan)?,
            scan,
            tables,
            entropy,
        })
    }

    pub fn entropy_bytes<'a>(&self, stream: &'a [u8]) -> &'a [u8] {
        &stream[self.entropy.range()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(w: u16, h: u16, comps: &[(u8, u8, u8)]) -> FrameHeader {
        let mut p = vec![8, (h >> 8) as u8, h as u8, (w >> 8) as u8, w as u8, comps.len() as u8];
        for &(id, hs, vs) in comps {
            p.extend([id, (hs << 4) | vs, 0]);
        }
        FrameHeader::parse(&p).unwrap()
    }

    fn sos(ids: &[u8]) -> Vec<u8> {
        let mut p = vec![ids.len() as u8];
        for &id in ids {
            p.extend([id, 0x00]);
        }
        p.extend([0, 63, 0]);
        p
    }

    #[test]
    fn grayscale_mcu_count() {
        let f = frame(17, 9, &[(1, 1, 1)]);
        let ctx = ScanContext::new(&f, &sos(&[1]), 0).unwrap();
        assert_eq!((ctx.mcus_wide, ctx.mcus_high, ctx.mcu_count), (3, 2, 6));
        assert_eq!(ctx.blocks_per_mcu(), 1);
    }

    #[test]
    fn interleaved_420_layout() {
        let f = frame(33, 17, &[(1, 2, 2), (2, 1, 1), (3, 1, 1)]);
        let ctx = ScanContext::new(&f, &sos(&[1, 2, 3]), 4).unwrap();
        assert_eq!((ctx.mcus_wide, ctx.mcus_high), (3, 2));
        assert_eq!(ctx.blocks_per_mcu(), 6);
        assert_eq!(ctx.components[1].blocks_wide, 3);
        assert_eq!(ctx.restart_interval, 4);
    }

    #[test]
    fn non_interleaved_chroma_uses_component_grid() {
        let f = frame(33, 17, &[(1, 2, 2), (2, 1, 1), (3, 1, 1)]);
        let ctx = ScanContext::new(&f, &sos(&[2]), 0).unwrap();
        assert_eq!((ctx.mcus_wide, ctx.mcus_high), (3, 2));
        let ctx = ScanContext::new(&f, &sos(&[1]), 0).unwrap();
        assert_eq!((ctx.mcus_wide, ctx.mcus_high), (5, 3));
    }

    #[test]
    fn rejects_progressive_scan_parameters() {
        let f = frame(8, 8, &[(1, 1, 1)]);
        let mut p = sos(&[1]);
        p[4] = 5; // Se
        assert!(ScanContext::new(&f, &p, 0).is_err());
    }

    #[test]
    fn rejects_non_8_bit_precision() {
        let mut p = vec![12, 0, 8, 0, 8, 1, 1, 0x11, 0];
        assert!(FrameHeader::parse(&p).is_err());
        p[0] = 8;
        assert!(FrameHeader::parse(&p).is_ok());
    }

    #[test]
    fn marker_only_stream_has_no_scan() {
        assert_eq!(BaselineJpeg::parse(&[0xFF, 0xD8, 0xFF, 0xD9]), Err(JpegError::MissingScan));
    }
}
