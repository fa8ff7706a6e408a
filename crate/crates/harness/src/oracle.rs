//! Slow, independent re-derivation of which bits the cipher may touch.
//!
//! Nothing here calls into `jpegveil-core`. Codes are matched as bit
//! strings, the segment is destuffed up front, and the byte classes follow
//! the exclusion list literally:
//!
//! 1. all eight bits are Huffman code,
//! 2. all eight bits are additional bits,
//! 3. the `00` after an `FF`,
//! 4. code and additional bits together, with every code bit equal to 1.
//!
//! Every other byte holding both code and additional bits is encrypted.

use std::collections::HashMap;
use std::fmt;

/// Largest entropy segment the oracle accepts.
pub const MAX_ENTROPY_BYTES: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Owner {
    Code,
    Extra,
    Pad,
    Stuffing,
    Restart,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coefficient {
    Dc,
    Ac,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BitNote {
    pub owner: Owner,
    pub coefficient: Option<Coefficient>,
    pub value: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleClass {
    CodeOnly,
    ExtraOnly,
    StuffedZero,
    OnesOnlyCode,
    Encrypt,
    /// Would be encrypted, but only holds extra bits of a band left clear.
    BandOff,
    Other,
}

/// Per-bit and per-byte annotation of a tiny entropy segment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleTrace {
    /// File offset of the first entropy byte.
    pub entropy_offset: usize,
    /// One note per raw bit of the segment.
    pub bits: Vec<BitNote>,
    pub classes: Vec<OracleClass>,
    /// Absolute file bit positions to encrypt, ascending.
    pub encrypted: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleError(pub String);

impl fmt::Display for OracleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "oracle: {}", self.0)
    }
}

impl std::error::Error for OracleError {}

fn fail<T>(msg: impl Into<String>) -> Result<T, OracleError> {
    Err(OracleError(msg.into()))
}

struct Table {
    by_code: HashMap<String, u8>,
}

struct Header {
    width: usize,
    height: usize,
    // (id, h, v)
    frame: Vec<(u8, usize, usize)>,
    // (frame index, dc table, ac table)
    scan: Vec<(usize, u8, u8)>,
    restart: usize,
    dc: HashMap<u8, Table>,
    ac: HashMap<u8, Table>,
    entropy: (usize, usize),
}

fn read_header(file: &[u8]) -> Result<Header, OracleError> {
    if file.get(..2) != Some(&[0xFF, 0xD8]) {
        return fail("no SOI");
    }
    let mut h = Header {
        width: 0,
        height: 0,
        frame: vec![],
        scan: vec![],
        restart: 0,
        dc: HashMap::new(),
        ac: HashMap::new(),
        entropy: (0, 0),
    };
    let mut i = 2;
    loop {
        if i + 4 > file.len() || file[i] != 0xFF {
            return fail(format!("bad marker at {i}"));
        }
        let m = file[i + 1];
        let len = (file[i + 2] as usize) << 8 | file[i + 3] as usize;
        let body = file.get(i + 4..i + 2 + len).ok_or(OracleError("short segment".into()))?;
        match m {
            0xC0 => {
                h.height = (body[1] as usize) << 8 | body[2] as usize;
                h.width = (body[3] as usize) << 8 | body[4] as usize;
                for c in body[6..].chunks(3) {
                    h.frame.push((c[0], (c[1] >> 4) as usize, (c[1] & 15) as usize));
                }
            }
            0xC1..=0xCF if m != 0xC4 && m != 0xC8 && m != 0xCC => return fail("not baseline"),
            0xC4 => {
                let mut p = body;
                while !p.is_empty() {
                    let counts = &p[1..17];
                    let total: usize = counts.iter().map(|&c| c as usize).sum();
                    let vals = &p[17..17 + total];
                    let mut by_code = HashMap::new();
                    let mut code = 0u32;
                    let mut k = 0;
                    for (l, &n) in counts.iter().enumerate() {
                        for _ in 0..n {
                            by_code.insert(format!("{:0w$b}", code, w = l + 1), vals[k]);
                            code += 1;
                            k += 1;
                        }
                        code *= 2;
                    }
                    let table = Table { by_code };
                    if p[0] >> 4 == 0 {
                        h.dc.insert(p[0] & 15, table);
                    } else {
                        h.ac.insert(p[0] & 15, table);
                    }
                    p = &p[17 + total..];
                }
            }
            0xDD => h.restart = (body[0] as usize) << 8 | body[1] as usize,
            0xDA => {
                for c in body[1..1 + 2 * body[0] as usize].chunks(2) {
                    let fi = h
                        .frame
                        .iter()
                        .position(|f| f.0 == c[0])
                        .ok_or(OracleError("unknown component".into()))?;
                    h.scan.push((fi, c[1] >> 4, c[1] & 15));
                }
                let start = i + 2 + len;
                let mut end = start;
                while !(file.get(end) == Some(&0xFF)
                    && !matches!(file.get(end + 1), Some(0x00) | Some(0xD0..=0xD7)))
                {
                    if end >= file.len() {
                        return fail("scan never ends");
                    }
                    end += 1;
                }
                h.entropy = (start, end);
                return Ok(h);
            }
            _ => {}
        }
        i += 2 + len;
    }
}

/// Annotates every bit of the tiny JPEG's entropy segment.
///
/// `dc` and `ac` select which bands' extra bits may be encrypted.
pub fn brute_force_oracle(file: &[u8], dc: bool, ac: bool) -> Result<OracleTrace, OracleError> {
    let h = read_header(file)?;
    let (start, end) = h.entropy;
    let raw = &file[start..end];
    if raw.len() > MAX_ENTROPY_BYTES {
        return fail("entropy segment longer than 256 bytes");
    }

    // Destuff into restart intervals of (bit value, raw bit index).
    let mut notes = vec![
        BitNote {
            owner: Owner::Pad,
            coefficient: None,
            value: 0
        };
        raw.len() * 8
    ];
    let mut intervals: Vec<Vec<(u8, usize)>> = vec![vec![]];
    let mut j = 0;
    while j < raw.len() {
        let byte = raw[j];
        for b in 0..8 {
            notes[j * 8 + b].value = (byte >> (7 - b)) & 1;
        }
        if byte == 0xFF && raw.get(j + 1).is_some_and(|n| (0xD0..=0xD7).contains(n)) {
            for b in 0..16 {
                notes[j * 8 + b].owner = Owner::Restart;
            }
            intervals.push(vec![]);
            j += 2;
            continue;
        }
        for b in 0..8 {
            intervals.last_mut().unwrap().push((notes[j * 8 + b].value, j * 8 + b));
        }
        if byte == 0xFF {
            for b in 0..8 {
                notes[(j + 1) * 8 + b].owner = Owner::Stuffing;
            }
            j += 2;
        } else {
            j += 1;
        }
    }

    // MCU geometry.
    let hmax = h.frame.iter().map(|f| f.1).max().unwrap_or(1);
    let vmax = h.frame.iter().map(|f| f.2).max().unwrap_or(1);
    let (mcus, layout): (usize, Vec<usize>) = if h.scan.len() == 1 {
        let (fi, _, _) = h.scan[0];
        let cw = (h.width * h.frame[fi].1).div_ceil(hmax);
        let ch = (h.height * h.frame[fi].2).div_ceil(vmax);
        (cw.div_ceil(8) * ch.div_ceil(8), vec![0])
    } else {
        let mut layout = vec![];
        for (si, &(fi, _, _)) in h.scan.iter().enumerate() {
            for _ in 0..h.frame[fi].1 * h.frame[fi].2 {
                layout.push(si);
            }
        }
        (h.width.div_ceil(8 * hmax) * h.height.div_ceil(8 * vmax), layout)
    };
    let per_interval = if h.restart == 0 { mcus } else { h.restart };

    let mut mcu = 0;
    for interval in &intervals {
        let mut cursor = 0usize;
        let mut take = |n: usize, owner: Owner, coef: Option<Coefficient>| -> Result<String, OracleError> {
            let mut s = String::new();
            for _ in 0..n {
                let &(v, at) = interval.get(cursor).ok_or(OracleError("ran out of bits".into()))?;
                notes[at].owner = owner;
                notes[at].coefficient = coef;
                s.push(if v == 1 { '1' } else { '0' });
                cursor += 1;
            }
            Ok(s)
        };
        let mut count = 0;
        while count < per_interval && mcu < mcus {
            for &si in &layout {
                let (_, dct, act) = h.scan[si];
                let dc_table = h.dc.get(&dct).ok_or(OracleError("missing DC table".into()))?;
                let ac_table = h.ac.get(&act).ok_or(OracleError("missing AC table".into()))?;
                // DC
                let mut code = String::new();
                let size = loop {
                    code += &take(1, Owner::Code, Some(Coefficient::Dc))?;
                    if let Some(&s) = dc_table.by_code.get(&code) {
                        break s;
                    }
                    if code.len() > 16 {
                        return fail("no DC code");
                    }
                };
                take(size as usize, Owner::Extra, Some(Coefficient::Dc))?;
                // AC
                let mut k = 1;
                while k < 64 {
                    let mut code = String::new();
                    let rs = loop {
                        code += &take(1, Owner::Code, Some(Coefficient::Ac))?;
                        if let Some(&s) = ac_table.by_code.get(&code) {
                            break s;
                        }
                        if code.len() > 16 {
                            return fail("no AC code");
                        }
                    };
                    let (r, s) = ((rs >> 4) as usize, (rs & 15) as usize);
                    if s == 0 && r != 15 {
                        break;
                    }
                    k += r;
                    take(s, Owner::Extra, Some(Coefficient::Ac))?;
                    k += 1;
                }
            }
            count += 1;
            mcu += 1;
        }
        // whatever is left in the interval stays Pad
    }
    if mcu < mcus {
        return fail("not enough data for all MCUs");
    }

    // Byte classes.
    let mut classes = Vec::with_capacity(raw.len());
    let mut encrypted = Vec::new();
    for (j, byte) in notes.chunks(8).enumerate() {
        let code_bits: Vec<&BitNote> = byte.iter().filter(|n| n.owner == Owner::Code).collect();
        let extra_bits: Vec<&BitNote> = byte.iter().filter(|n| n.owner == Owner::Extra).collect();
        let wanted = |n: &&BitNote| match n.coefficient {
            Some(Coefficient::Dc) => dc,
            Some(Coefficient::Ac) => ac,
            None => false,
        };
        let class = if byte.iter().all(|n| n.owner == Owner::Stuffing) {
            OracleClass::StuffedZero
        } else if code_bits.is_empty() && extra_bits.is_empty() {
            OracleClass::Other
        } else if extra_bits.is_empty() {
            OracleClass::CodeOnly
        } else if code_bits.is_empty() {
            OracleClass::ExtraOnly
        } else if code_bits.iter().all(|n| n.value == 1) {
            OracleClass::OnesOnlyCode
        } else if extra_bits.iter().any(wanted) {
            OracleClass::Encrypt
        } else {
            OracleClass::BandOff
        };
        if class == OracleClass::Encrypt {
            for (b, n) in byte.iter().enumerate() {
                if n.owner == Owner::Extra && wanted(&n) {
                    encrypted.push(((start + j) * 8 + b) as u64);
                }
            }
        }
        classes.push(class);
    }

    Ok(OracleTrace {
        entropy_offset: start,
        bits: notes,
        classes,
        encrypted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tiny::TinyJpeg;

    #[test]
    fn empty_block_has_nothing_to_encrypt() {
        let img = TinyJpeg::gray_row(vec![[0; 64]]).encode();
        let t = brute_force_oracle(&img, true, true).unwrap();
        assert_eq!(t.classes, vec![OracleClass::CodeOnly]);
        assert!(t.encrypted.is_empty());
    }

    #[test]
    fn ff_data_byte_is_never_encrypted() {
        let mut b = [0i16; 64];
        b[0] = 2047;
        b[1] = -3;
        let img = TinyJpeg::gray_row(vec![b]).encode();
        let t = brute_force_oracle(&img, true, true).unwrap();
        let raw = &img[t.entropy_offset..t.entropy_offset + t.classes.len()];
        assert_eq!(raw[0], 0xFF);
        assert_eq!(t.classes[1], OracleClass::StuffedZero);
        for (j, &byte) in raw.iter().enumerate() {
            if byte == 0xFF {
                assert_ne!(t.classes[j], OracleClass::Encrypt);
            }
        }
    }

    #[test]
    fn rejects_large_segments() {
        let blocks = vec![
            {
                let mut b = [0i16; 64];
                for (i, c) in b.iter_mut().enumerate() {
                    *c = 500 - i as i16 * 7;
                }
                b
            };
            8
        ];
        let img = TinyJpeg::gray_row(blocks).encode();
        assert!(brute_force_oracle(&img, true, true).is_err());
    }
}
