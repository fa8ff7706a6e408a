//! Canonical Huffman decode tables built from DHT definitions.

use crate::error::JpegError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TableClass {
    Dc,
    Ac,
}

impl TableClass {
    pub fn name(self) -> &'static str {
        match self {
            TableClass::Dc => "DC",
            TableClass::Ac => "AC",
        }
    }
}

/// One assigned code: `length` bits of `code`, MSB first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CodeEntry {
    pub length: u8,
    pub code: u16,
    pub symbol: u8,
}

/// Decode table for one (class, id) Huffman definition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HuffmanDecoder {
    pub table_class: TableClass,
    pub table_id: u8,
    pub bits: [u8; 16],
    pub huffval: Vec<u8>,
    codes: Vec<CodeEntry>,
    // Indexed by code length 1..=16; -1 where no code of that length exists.
    max_code: [i32; 17],
    min_code: [u16; 17],
    val_offset: [usize; 17],
}

impl HuffmanDecoder {
    /// Builds a decoder from BITS (codes per length 1..=16) and HUFFVAL.
    pub fn new(
        table_class: TableClass,
        table_id: u8,
        bits: [u8; 16],
        huffval: Vec<u8>,
    ) -> Result<Self, JpegError> {
        if table_id > 3 {
            return Err(JpegError::MalformedDht("table id above 3"));
        }
        let total: usize = bits.iter().map(|&b| b as usize).sum();
        if total != huffval.len() {
            return Err(JpegError::MalformedDht("BITS total differs from HUFFVAL length"));
        }
        if total > 256 {
            return Err(JpegError::MalformedDht("more than 256 codes"));
        }
        if table_class == TableClass::Dc && huffval.iter().any(|&s| s > 11) {
            return Err(JpegError::MalformedDht("DC category above 11"));
        }

        let mut codes = Vec::with_capacity(total);
        let mut max_code = [-1i32; 17];
        let mut min_code = [0u16; 17];
        let mut val_offset = [0usize; 17];
        let mut code: u32 = 0;
        let mut k = 0usize;
        for length in 1..=16u8 {
            let count = bits[length as usize - 1] as usize;
            if count > 0 {
                val_offset[length as usize] = k;
                min_code[length as usize] = code as u16;
                for _ in 0..count {
                    codes.push(CodeEntry {
                        length,
                        code: code as u16,
                        symbol: huffval[k],
                    });
                    code += 1;
                    k += 1;
                }
                max_code[length as usize] = code as i32 - 1;
            }
            if code > (1u32 << length) {
                return Err(JpegError::OverfullCode { length });
            }
            code <<= 1;
        }

        Ok(HuffmanDecoder {
            table_class,
            table_id,
            bits,
            huffval,
            codes,
            max_code,
            min_code,
            val_offset,
        })
    }

    /// All assigned codes in canonical order.
    pub fn codes(&self) -> &[CodeEntry] {
        &self.codes
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    /// Symbol for the exact (length, code) pair, if assigned.
    pub fn lookup(&self, length: u8, code: u16) -> Option<u8> {
        if !(1..=16).contains(&length) {
            return None;
        }
        let l = length as usize;
        let code = code as i32;
        if self.max_code[l] < 0 || code < self.min_code[l] as i32 || code > self.max_code[l] {
            return None;
        }
        Some(self.huffval[self.val_offset[l] + (code - self.min_code[l] as i32) as usize])
    }

    /// Decodes one symbol, pulling bits from `next_bit` until a code matches.
    ///
    /// Returns the symbol and the code length. `Ok(None)` means no code of
    /// length up to 16 matched.
    pub fn decode<E>(
        &self,
        mut next_bit: impl FnMut() -> Result<u8, E>,
    ) -> Result<Option<(u8, u8)>, E> {
        if self.codes.is_empty() {
            return Ok(None);
        }
        let mut code: i32 = 0;
        for length in 1..=16usize {
            code = (code << 1) | next_bit()? as i32;
            if code <= self.max_code[length] {
                let symbol = self.huffval[self.val_offset[length] + (code - self.min_code[length] as i32) as usize];
                return Ok(Some((symbol, length as u8)));
            }
        }
        Ok(None)
    }
}

/// Parses every table definition in one DHT payload.
pub fn build_huffman_decoders(payload: &[u8]) -> Result<Vec<HuffmanDecoder>, JpegError> {
    let mut decoders = Vec::new();
    let mut rest = payload;
    if rest.is_empty() {
        return Err(JpegError::MalformedDht("empty payload"));
    }
    while !rest.is_empty() {
        if rest.len() < 17 {
            return Err(JpegError::MalformedDht("definition shorter than 17 bytes"));
        }
        let table_class = match rest[0] >> 4 {
            0 => TableClass::Dc,
            1 => TableClass::Ac,
            _ => return Err(JpegError::MalformedDht("table class above 1")),
        };
        let table_id = rest[0] & 0x0F;
        let mut bits = [0u8; 16];
        bits.copy_from_slice(&rest[1..17]);
        let total: usize = bits.iter().map(|&b| b as usize).sum();
        if rest.len() < 17 + total {
            return Err(JpegError::MalformedDht("code counts exceed payload"));
        }
        let huffval = rest[17..17 + total].to_vec();
        decoders.push(HuffmanDecoder::new(table_class, table_id, bits, huffval)?);
        rest = &rest[17 + total..];
    }
    Ok(decoders)
}
