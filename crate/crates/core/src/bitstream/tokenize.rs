//! Bit-exact tokenization of the entropy-coded segment.
//!
//! Every bit of the segment is attributed to exactly one token. Bit offsets
//! are absolute within the raw segment bytes, so a token that crosses a
//! stuffed `00` byte keeps its logical length while its raw extent skips
//! that byte; [`ScanTokens::bit_positions`] resolves the raw bits.

use crate::bitstream::frame::{HuffmanTables, ScanContext};
use crate::bitstream::huffman::{HuffmanDecoder, TableClass};
use crate::error::JpegError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenKind {
    HuffCode,
    AdditionalBits,
    StuffedByte,
    RestartMarker,
    PadBits,
}

/// Which coefficient band a code or its additional bits belong to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Band {
    Dc,
    Ac,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EntropyToken {
    pub kind: TokenKind,
    pub bit_start: u64,
    /// Data bits covered; stuffed bytes crossed by the token are not counted.
    pub bit_len: u32,
    /// `None` for stuffing, restart markers and padding.
    pub band: Option<Band>,
    /// HuffCode only: every bit of the code is 1.
    pub all_ones: bool,
    /// HuffCode only: the decoded symbol.
    pub symbol: u8,
    pub mcu: u32,
    /// Index into the scan's component list.
    pub component: u8,
    /// Block index within the MCU.
    pub block: u8,
    /// Zig-zag index of the coefficient this code or value belongs to.
    pub coef: u8,
}

impl EntropyToken {
    fn bare(kind: TokenKind, bit_start: u64, bit_len: u32, mcu: u32) -> Self {
        EntropyToken {
            kind,
            bit_start,
            bit_len,
            band: None,
            all_ones: false,
            symbol: 0,
            mcu,
            component: 0,
            block: 0,
            coef: 0,
        }
    }

    /// True for tokens whose bits come from the bit reader.
    pub fn is_data(&self) -> bool {
        matches!(
            self.kind,
            TokenKind::HuffCode | TokenKind::AdditionalBits | TokenKind::PadBits
        )
    }
}

/// The token tiling of one entropy-coded segment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScanTokens {
    pub tokens: Vec<EntropyToken>,
    /// Sorted byte offsets of stuffed `00` bytes.
    pub stuffed: Vec<usize>,
    /// Length of the segment in bytes.
    pub byte_len: usize,
}

impl std::ops::Deref for ScanTokens {
    type Target = [EntropyToken];

    fn deref(&self) -> &[EntropyToken] {
        &self.tokens
    }
}

impl ScanTokens {
    pub fn is_stuffed(&self, byte: usize) -> bool {
        self.stuffed.binary_search(&byte).is_ok()
    }

    /// Raw bit offsets (MSB-first within each byte) occupied by a data token.
    pub fn bit_positions<'a>(&'a self, token: &EntropyToken) -> impl Iterator<Item = u64> + 'a {
        let mut pos = token.bit_start;
        let mut left = if token.is_data() { token.bit_len } else { 0 };
        std::iter::from_fn(move || {
            if left == 0 {
                return None;
            }
            while pos & 7 == 0 && self.is_stuffed((pos / 8) as usize) {
                pos += 8;
            }
            let p = pos;
            pos += 1;
            left -= 1;
            Some(p)
        })
    }

    /// The token's bits read from `data`, MSB first.
    pub fn read_bits(&self, data: &[u8], token: &EntropyToken) -> u32 {
        self.bit_positions(token).fold(0u32, |acc, p| {
            (acc << 1) | ((data[(p / 8) as usize] >> (7 - (p % 8))) & 1) as u32
        })
    }

    /// Position and symbol of every Huffman code, in stream order.
    pub fn huff_codes(&self) -> impl Iterator<Item = (u64, u32, u8)> + '_ {
        self.tokens
            .iter()
            .filter(|t| t.kind == TokenKind::HuffCode)
            .map(|t| (t.bit_start, t.bit_len, t.symbol))
    }

    pub fn count(&self, kind: TokenKind) -> usize {
        self.tokens.iter().filter(|t| t.kind == kind).count()
    }

    /// Quantized coefficients of every block, in decode order.
    ///
    /// Only the DC prediction and sign extension steps of decoding are done
    /// here; there is no dequantization or IDCT.
    pub fn coefficients(&self, data: &[u8], ctx: &ScanContext) -> Vec<DecodedBlock> {
        let mut out: Vec<DecodedBlock> = Vec::new();
        let mut preds = vec![0i32; ctx.components.len()];
        for t in &self.tokens {
            match (t.kind, t.band) {
                (TokenKind::RestartMarker, _) => preds.iter_mut().for_each(|p| *p = 0),
                (TokenKind::HuffCode, Some(Band::Dc)) => {
                    let comp = &ctx.components[t.component as usize];
                    let (row, col) = if ctx.is_interleaved() {
                        let (mx, my) = (t.mcu % ctx.mcus_wide, t.mcu / ctx.mcus_wide);
                        let (bx, by) = (t.block as u32 % comp.h as u32, t.block as u32 / comp.h as u32);
                        (my * comp.v as u32 + by, mx * comp.h as u32 + bx)
                    } else {
                        (t.mcu / ctx.mcus_wide, t.mcu % ctx.mcus_wide)
                    };
                    let mut coefficients = [0i32; 64];
                    coefficients[0] = preds[t.component as usize];
                    out.push(DecodedBlock {
                        component: t.component as usize,
                        row,
                        col,
                        coefficients,
                    });
                }
                (TokenKind::AdditionalBits, Some(band)) => {
                    let value = extend(self.read_bits(data, t), t.bit_len);
                    let block = out.last_mut().expect("additional bits precede any DC code");
                    if band == Band::Dc {
                        preds[t.component as usize] += value;
                        block.coefficients[0] = preds[t.component as usize];
                    } else {
                        block.coefficients[t.coef as usize] = value;
                    }
                }
                _ => {}
            }
        }
        out
    }
}

/// Quantized coefficients of one block, zig-zag ordered.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodedBlock {
    pub component: usize,
    pub row: u32,
    pub col: u32,
    pub coefficients: [i32; 64],
}

/// Sign extension of an additional-bits value of the given category.
pub fn extend(value: u32, category: u32) -> i32 {
    if category == 0 {
        return 0;
    }
    let v = value as i32;
    if v < 1 << (category - 1) {
        v - (1 << category) + 1
    } else {
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Data,
    Stuffed,
    Restart(u8),
    Marker,
}

fn byte_roles(data: &[u8]) -> Vec<Role> {
    let mut roles = vec![Role::Data; data.len()];
    let mut i = 0;
    while i < data.len() {
        if data[i] == 0xFF {
            match data.get(i + 1) {
                Some(0x00) => {
                    roles[i + 1] = Role::Stuffed;
                    i += 2;
                }
                Some(&m @ 0xD0..=0xD7) => {
                    roles[i] = Role::Restart(m - 0xD0);
                    roles[i + 1] = Role::Restart(m - 0xD0);
                    i += 2;
                }
                _ => {
                    roles[i..].iter_mut().for_each(|r| *r = Role::Marker);
                    break;
                }
            }
        } else {
            i += 1;
        }
    }
    roles
}

struct Reader<'a> {
    data: &'a [u8],
    roles: Vec<Role>,
    pos: usize,
    bit: u8,
    mcu: u32,
    tokens: Vec<EntropyToken>,
    stuffed: Vec<usize>,
}

impl<'a> Reader<'a> {
    fn skip_stuffed(&mut self) {
        if self.bit != 0 {
            return;
        }
        while self.roles.get(self.pos) == Some(&Role::Stuffed) {
            self.stuffed.push(self.pos);
            self.tokens.push(EntropyToken::bare(
                TokenKind::StuffedByte,
                self.pos as u64 * 8,
                8,
                self.mcu,
            ));
            self.pos += 1;
        }
    }

    fn position(&mut self) -> u64 {
        self.skip_stuffed();
        self.pos as u64 * 8 + self.bit as u64
    }

    fn next_bit(&mut self) -> Result<u8, JpegError> {
        if self.bit == 0 {
            self.skip_stuffed();
            match self.roles.get(self.pos) {
                Some(Role::Data) => {}
                Some(Role::Restart(_)) => {
                    return Err(JpegError::RestartMisaligned { byte_offset: self.pos })
                }
                Some(Role::Stuffed) => unreachable!("skipped above"),
                Some(Role::Marker) | None => return Err(JpegError::PrematureEnd { mcu: self.mcu }),
            }
        }
        let b = (self.data[self.pos] >> (7 - self.bit)) & 1;
        self.bit += 1;
        if self.bit == 8 {
            self.bit = 0;
            self.pos += 1;
        }
        Ok(b)
    }

    /// Decodes one code; returns (symbol, start, length, all_ones).
    fn huff(&mut self, table: &HuffmanDecoder) -> Result<(u8, u64, u8, bool), JpegError> {
        let start = self.position();
        let mut ones = true;
        let decoded = table.decode(|| {
            let b = self.next_bit()?;
            ones &= b == 1;
            Ok(b)
        })?;
        match decoded {
            Some((symbol, len)) => Ok((symbol, start, len, ones)),
            None => Err(JpegError::InvalidCode { bit_offset: start }),
        }
    }

    fn skip_bits(&mut self, n: u8) -> Result<u64, JpegError> {
        let start = self.position();
        for _ in 0..n {
            self.next_bit()?;
        }
        Ok(start)
    }

    /// Emits a PadBits token for the rest of the current byte, if any.
    fn align(&mut self) {
        if self.bit != 0 {
            let start = self.pos as u64 * 8 + self.bit as u64;
            self.tokens.push(EntropyToken::bare(
                TokenKind::PadBits,
                start,
                8 - self.bit as u32,
                self.mcu,
            ));
            self.bit = 0;
            self.pos += 1;
        }
        self.skip_stuffed();
    }
}

/// Splits `data` (a raw entropy-coded segment, stuffing intact) into tokens.
pub fn tokenize_scan(
    data: &[u8],
    ctx: &ScanContext,
    tables: &HuffmanTables,
) -> Result<ScanTokens, JpegError> {
    let mut dc_tables = Vec::with_capacity(ctx.components.len());
    let mut ac_tables = Vec::with_capacity(ctx.components.len());
    for c in &ctx.components {
        dc_tables.push(tables.get(TableClass::Dc, c.dc_table).ok_or(JpegError::UndefinedTable {
            class: "DC",
            id: c.dc_table,
        })?);
        ac_tables.push(tables.get(TableClass::Ac, c.ac_table).ok_or(JpegError::UndefinedTable {
            class: "AC",
            id: c.ac_table,
        })?);
    }

    let mut r = Reader {
        data,
        roles: byte_roles(data),
        pos: 0,
        bit: 0,
        mcu: 0,
        tokens: Vec::new(),
        stuffed: Vec::new(),
    };
    let interval = ctx.restart_interval as u32;
    let mut next_restart = 0u8;

    for mcu in 0..ctx.mcu_count {
        r.mcu = mcu;
        if interval > 0 && mcu > 0 && mcu % interval == 0 {
            r.align();
            match r.roles.get(r.pos) {
                Some(&Role::Restart(n)) if n == next_restart => {
                    r.tokens.push(EntropyToken::bare(
                        TokenKind::RestartMarker,
                        r.pos as u64 * 8,
                        16,
                        mcu,
                    ));
                    r.pos += 2;
                    next_restart = (next_restart + 1) & 7;
                }
                Some(Role::Restart(_)) => {
                    return Err(JpegError::RestartMisaligned { byte_offset: r.pos })
                }
                _ => return Err(JpegError::PrematureEnd { mcu }),
            }
        }
        for (ci, comp) in ctx.components.iter().enumerate() {
            for block in 0..comp.blocks_per_mcu() {
                decode_block(&mut r, ci as u8, block as u8, dc_tables[ci], ac_tables[ci])?;
            }
        }
    }

    r.align();
    if r.pos < data.len() {
        return Err(match r.roles[r.pos] {
            Role::Restart(_) => JpegError::RestartMisaligned { byte_offset: r.pos },
            _ => JpegError::TrailingData {
                count: data.len() - r.pos,
            },
        });
    }

    let mut tokens = r.tokens;
    tokens.sort_by_key(|t| t.bit_start);
    Ok(ScanTokens {
        tokens,
        stuffed: r.stuffed,
        byte_len: data.len(),
    })
}

fn decode_block(
    r: &mut Reader<'_>,
    component: u8,
    block: u8,
    dc: &HuffmanDecoder,
    ac: &HuffmanDecoder,
) -> Result<(), JpegError> {
    let mcu = r.mcu;
    let code_token = |band, symbol, start, len: u8, all_ones, coef| EntropyToken {
        kind: TokenKind::HuffCode,
        bit_start: start,
        bit_len: len as u32,
        band: Some(band),
        all_ones,
        symbol,
        mcu,
        component,
        block,
        coef,
    };
    let bits_token = |band, start, len: u8, coef| EntropyToken {
        kind: TokenKind::AdditionalBits,
        bit_start: start,
        bit_len: len as u32,
        band: Some(band),
        all_ones: false,
        symbol: 0,
        mcu,
        component,
        block,
        coef,
    };

    let (symbol, start, len, ones) = r.huff(dc)?;
    if symbol > 11 {
        return Err(JpegError::InvalidSymbol { symbol, bit_offset: start });
    }
    r.tokens.push(code_token(Band::Dc, symbol, start, len, ones, 0));
    if symbol > 0 {
        let s = r.skip_bits(symbol)?;
        r.tokens.push(bits_token(Band::Dc, s, symbol, 0));
    }

    let mut k = 1u32;
    while k < 64 {
        let (symbol, start, len, ones) = r.huff(ac)?;
        r.tokens.push(code_token(Band::Ac, symbol, start, len, ones, k as u8));
        let (run, size) = ((symbol >> 4) as u32, symbol & 0x0F);
        if size == 0 {
            match run {
                0 => break,
                15 => {
                    k += 16;
                    continue;
                }
                _ => return Err(JpegError::InvalidSymbol { symbol, bit_offset: start }),
            }
        }
        k += run;
        if k > 63 {
            return Err(JpegError::InvalidSymbol { symbol, bit_offset: start });
        }
        let s = r.skip_bits(size)?;
        r.tokens.push(bits_token(Band::Ac, s, size, k as u8));
        k += 1;
    }
    Ok(())
}
