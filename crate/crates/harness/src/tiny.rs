//! A minimal baseline JPEG writer for hand-built test images.
//!
//! Blocks are given as quantized coefficients in zig-zag order, DC as an
//! absolute value. All quantizer entries are 1 and every component shares
//! one DC and one AC table, so the entropy data is fully determined by the
//! coefficients and the chosen tables.

use std::collections::HashMap;

use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};

use crate::tables::{LUMA_AC_BITS, LUMA_AC_VALS, LUMA_DC_BITS, LUMA_DC_VALS};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HuffSpec {
    pub bits: [u8; 16],
    pub vals: Vec<u8>,
}

impl HuffSpec {
    pub fn luma_dc() -> Self {
        HuffSpec {
            bits: LUMA_DC_BITS,
            vals: LUMA_DC_VALS.to_vec(),
        }
    }

    pub fn luma_ac() -> Self {
        HuffSpec {
            bits: LUMA_AC_BITS,
            vals: LUMA_AC_VALS.to_vec(),
        }
    }

    /// Canonical (length, code) per symbol.
    fn code_table(&self) -> HashMap<u8, (u8, u16)> {
        let mut table = HashMap::new();
        let mut code = 0u16;
        let mut k = 0;
        for len in 1..=16u8 {
            for _ in 0..self.bits[len as usize - 1] {
                table.insert(self.vals[k], (len, code));
                code += 1;
                k += 1;
            }
            code <<= 1;
        }
        table
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TinyJpeg {
    pub width: u16,
    pub height: u16,
    /// Sampling factors (h, v) per component.
    pub sampling: Vec<(u8, u8)>,
    /// Blocks in scan order.
    pub blocks: Vec<[i16; 64]>,
    pub restart_interval: u16,
    pub dc_table: HuffSpec,
    pub ac_table: HuffSpec,
}

impl TinyJpeg {
    /// A grayscale image made of `blocks.len()` blocks laid out in one row.
    pub fn gray_row(blocks: Vec<[i16; 64]>) -> Self {
        TinyJpeg {
            width: 8 * blocks.len() as u16,
            height: 8,
            sampling: vec![(1, 1)],
            blocks,
            restart_interval: 0,
            dc_table: HuffSpec::luma_dc(),
            ac_table: HuffSpec::luma_ac(),
        }
    }

    fn blocks_per_mcu(&self) -> usize {
        if self.sampling.len() == 1 {
            1
        } else {
            self.sampling.iter().map(|&(h, v)| h as usize * v as usize).sum()
        }
    }

    /// Component index of each block within an MCU.
    fn mcu_layout(&self) -> Vec<usize> {
        if self.sampling.len() == 1 {
            return vec![0];
        }
        self.sampling
            .iter()
            .enumerate()
            .flat_map(|(c, &(h, v))| std::iter::repeat_n(c, h as usize * v as usize))
            .collect()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = vec![0xFF, 0xD8];
        // DQT: table 0, all ones
        segment(&mut out, 0xDB, &{
            let mut p = vec![0u8];
            p.extend([1u8; 64]);
            p
        });
        let mut sof = vec![8];
        sof.extend(self.height.to_be_bytes());
        sof.extend(self.width.to_be_bytes());
        sof.push(self.sampling.len() as u8);
        for (i, &(h, v)) in self.sampling.iter().enumerate() {
            sof.extend([i as u8 + 1, (h << 4) | v, 0]);
        }
        segment(&mut out, 0xC0, &sof);
        for (class, spec) in [(0u8, &self.dc_table), (1, &self.ac_table)] {
            let mut p = vec![class << 4];
            p.extend(spec.bits);
            p.extend(&spec.vals);
            segment(&mut out, 0xC4, &p);
        }
        if self.restart_interval > 0 {
            segment(&mut out, 0xDD, &self.restart_interval.to_be_bytes());
        }
        let mut sos = vec![self.sampling.len() as u8];
        for i in 0..self.sampling.len() {
            sos.extend([i as u8 + 1, 0x00]);
        }
        sos.extend([0, 63, 0]);
        segment(&mut out, 0xDA, &sos);
        out.extend(self.entropy());
        out.extend([0xFF, 0xD9]);
        out
    }

    /// The entropy-coded segment alone.
    pub fn entropy(&self) -> Vec<u8> {
        let dc = self.dc_table.code_table();
        let ac = self.ac_table.code_table();
        let layout = self.mcu_layout();
        let per_mcu = self.blocks_per_mcu();
        assert_eq!(self.blocks.len() % per_mcu, 0, "partial MCU");

        let mut w = BitWriter::default();
        let mut preds = vec![0i16; self.sampling.len()];
        let mut restarts = 0u8;
        for (m, mcu) in self.blocks.chunks(per_mcu).enumerate() {
            if self.restart_interval > 0 && m > 0 && m % self.restart_interval as usize == 0 {
                w.flush();
                w.bytes.extend([0xFF, 0xD0 + restarts]);
                restarts = (restarts + 1) & 7;
                preds.iter_mut().for_each(|p| *p = 0);
            }
            for (block, &comp) in mcu.iter().zip(&layout) {
                let diff = block[0] - preds[comp];
                preds[comp] = block[0];
                let (cat, bits) = magnitude(diff);
                w.code(&dc, cat);
                w.put(bits, cat);
                let mut run = 0u8;
                for &c in &block[1..] {
                    if c == 0 {
                        run += 1;
                        continue;
                    }
                    while run > 15 {
                        w.code(&ac, 0xF0);
                        run -= 16;
                    }
                    let (cat, bits) = magnitude(c);
                    w.code(&ac, (run << 4) | cat);
                    w.put(bits, cat);
                    run = 0;
                }
                if run > 0 {
                    w.code(&ac, 0x00);
                }
            }
        }
        w.flush();
        w.bytes
    }
}

fn segment(out: &mut Vec<u8>, marker: u8, payload: &[u8]) {
    out.extend([0xFF, marker]);
    out.extend((payload.len() as u16 + 2).to_be_bytes());
    out.extend(payload);
}

fn magnitude(v: i16) -> (u8, u16) {
    let cat = (16 - v.unsigned_abs().leading_zeros()) as u8;
    let bits = if v >= 0 { v as u16 } else { (v + (1 << cat) - 1) as u16 };
    (cat, bits)
}

#[derive(Default)]
struct BitWriter {
    bytes: Vec<u8>,
    acc: u8,
    n: u8,
}

impl BitWriter {
    fn put(&mut self, bits: u16, len: u8) {
        for i in (0..len).rev() {
            self.acc = (self.acc << 1) | ((bits >> i) & 1) as u8;
            self.n += 1;
            if self.n == 8 {
                self.bytes.push(self.acc);
                if self.acc == 0xFF {
                    self.bytes.push(0x00);
                }
                self.acc = 0;
                self.n = 0;
            }
        }
    }

    fn code(&mut self, table: &HashMap<u8, (u8, u16)>, symbol: u8) {
        let &(len, code) = table
            .get(&symbol)
            .unwrap_or_else(|| panic!("symbol 0x{symbol:02X} missing from table"));
        self.put(code, len);
    }

    fn flush(&mut self) {
        while self.n != 0 {
            self.put(1, 1);
        }
    }
}

/// Hand-built images of one to four blocks: a few named cases plus
/// `random` seeded ones, some of them with randomly shaped Huffman tables.
pub fn hand_built(random: usize) -> Vec<(String, TinyJpeg)> {
    let mut out = Vec::new();
    out.push(("dc0-eob".to_string(), TinyJpeg::gray_row(vec![[0; 64]])));

    let mut ff = [0i16; 64];
    ff[0] = 2047;
    ff[1] = -3;
    ff[5] = 1;
    out.push(("ff-bytes".to_string(), TinyJpeg::gray_row(vec![ff])));

    let mut rng = StdRng::seed_from_u64(0x5EED_0001);
    let mut restart = TinyJpeg::gray_row((0..4).map(|_| random_block(&mut rng)).collect());
    restart.restart_interval = 1;
    out.push(("gray-4-restart-1".to_string(), restart));

    out.push((
        "ycc444".to_string(),
        TinyJpeg {
            width: 8,
            height: 8,
            sampling: vec![(1, 1), (1, 1), (1, 1)],
            blocks: (0..3).map(|_| random_block(&mut rng)).collect(),
            restart_interval: 0,
            dc_table: HuffSpec::luma_dc(),
            ac_table: HuffSpec::luma_ac(),
        },
    ));

    for i in 0..random {
        let layout = rng.random_range(0..4u8);
        let mut img = match layout {
            0 => TinyJpeg::gray_row((0..rng.random_range(1..=4)).map(|_| random_block(&mut rng)).collect()),
            1 => TinyJpeg {
                width: 16,
                height: 16,
                sampling: vec![(1, 1)],
                blocks: (0..4).map(|_| random_block(&mut rng)).collect(),
                restart_interval: 0,
                dc_table: HuffSpec::luma_dc(),
                ac_table: HuffSpec::luma_ac(),
            },
            2 => TinyJpeg {
                width: 8,
                height: 8,
                sampling: vec![(1, 1), (1, 1), (1, 1)],
                blocks: (0..3).map(|_| random_block(&mut rng)).collect(),
                restart_interval: 0,
                dc_table: HuffSpec::luma_dc(),
                ac_table: HuffSpec::luma_ac(),
            },
            _ => TinyJpeg {
                width: 16,
                height: 8,
                sampling: vec![(2, 1), (1, 1), (1, 1)],
                blocks: (0..4).map(|_| random_block(&mut rng)).collect(),
                restart_interval: 0,
                dc_table: HuffSpec::luma_dc(),
                ac_table: HuffSpec::luma_ac(),
            },
        };
        if img.blocks.len() > 1 && img.sampling.len() == 1 && rng.random_bool(0.3) {
            img.restart_interval = rng.random_range(1..=2);
        }
        if rng.random_bool(0.5) {
            img.dc_table = random_table((0..=11).collect(), &mut rng);
            img.ac_table = random_table(ac_symbols(&img.blocks), &mut rng);
        }
        out.push((format!("random-{i:03}"), img));
    }
    out
}

/// A block whose coefficients thin out towards high frequencies.
pub fn random_block(rng: &mut StdRng) -> [i16; 64] {
    let mut b = [0i16; 64];
    b[0] = rng.random_range(-1024..=1023);
    let density = rng.random_range(0.05..0.6);
    for (k, c) in b.iter_mut().enumerate().skip(1) {
        if rng.random_bool(density * (1.0 - k as f64 / 80.0)) {
            let cat = rng.random_range(1..=(10 - k as u32 / 8).max(1));
            let mag = rng.random_range((1i16 << (cat - 1))..(1i16 << cat));
            *c = if rng.random_bool(0.5) { mag } else { -mag };
        }
    }
    b
}

fn ac_symbols(blocks: &[[i16; 64]]) -> Vec<u8> {
    let mut used = vec![0x00u8, 0xF0];
    for b in blocks {
        let mut run = 0u8;
        for &c in &b[1..] {
            if c == 0 {
                run += 1;
                continue;
            }
            run %= 16;
            used.push((run << 4) | magnitude(c).0);
            run = 0;
        }
    }
    used.sort_unstable();
    used.dedup();
    used
}

/// A complete (Kraft sum exactly 1) code over `symbols` with random shape,
/// so the last code of the longest length is all ones.
pub fn random_table(symbols: Vec<u8>, rng: &mut StdRng) -> HuffSpec {
    loop {
        // Huffman construction over random weights.
        let mut nodes: Vec<(u64, Vec<usize>)> = (0..symbols.len())
            .map(|i| (rng.random_range(1..1000u64), vec![i]))
            .collect();
        let mut depth = vec![0u8; symbols.len()];
        if symbols.len() == 1 {
            depth[0] = 1;
        }
        while nodes.len() > 1 {
            nodes.sort_by_key(|n| std::cmp::Reverse(n.0));
            let (wa, a) = nodes.pop().unwrap();
            let (wb, b) = nodes.pop().unwrap();
            for &i in a.iter().chain(&b) {
                depth[i] += 1;
            }
            nodes.push((wa + wb, a.into_iter().chain(b).collect()));
        }
        if depth.iter().any(|&d| d > 16) {
            continue;
        }
        let mut order: Vec<usize> = (0..symbols.len()).collect();
        let ties: Vec<u32> = order.iter().map(|_| rng.random_range(0..1000)).collect();
        order.sort_by_key(|&i| (depth[i], ties[i]));
        let mut bits = [0u8; 16];
        for &i in &order {
            bits[depth[i] as usize - 1] += 1;
        }
        return HuffSpec {
            bits,
            vals: order.iter().map(|&i| symbols[i]).collect(),
        };
    }
}
