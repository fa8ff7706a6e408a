//! Bridge to an independent JPEG decoder for conformance and visual checks.

use jpeg_decoder::{ColorTransform, Decoder};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decoded {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub pixels: Vec<u8>,
}

impl Decoded {
    /// Samples of one channel, row-major.
    pub fn channel(&self, c: usize) -> Vec<u8> {
        self.pixels.iter().skip(c).step_by(self.channels).copied().collect()
    }
}

fn run(bytes: &[u8], transform: Option<ColorTransform>) -> Result<Decoded, String> {
    let mut d = Decoder::new(bytes);
    if let Some(t) = transform {
        d.set_color_transform(t);
    }
    let pixels = d.decode().map_err(|e| e.to_string())?;
    let info = d.info().ok_or("decoder returned no image info")?;
    let (width, height) = (info.width as usize, info.height as usize);
    let channels = pixels.len() / (width * height).max(1);
    if channels * width * height != pixels.len() {
        return Err(format!("pixel buffer of {} bytes does not fit {width}x{height}", pixels.len()));
    }
    Ok(Decoded {
        width,
        height,
        channels,
        pixels,
    })
}

/// Decodes to display color (RGB or gray).
pub fn decode(bytes: &[u8]) -> Result<Decoded, String> {
    run(bytes, None)
}

/// Decodes without color conversion; channel 0 is luma.
///
/// `ColorTransform::None` panics on three-component input in jpeg-decoder
/// 0.3, while `RGB` interleaves the upsampled planes unchanged.
pub fn decode_planes(bytes: &[u8]) -> Result<Decoded, String> {
    run(bytes, Some(ColorTransform::RGB))
}

pub fn psnr(a: &[u8], b: &[u8]) -> f64 {
    assert_eq!(a.len(), b.len(), "images differ in size");
    let mse = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        / a.len() as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (255.0f64 * 255.0 / mse).log10()
    }
}

const ZIGZAG: [usize; 64] = [
    0, 1, 8, 16, 9, 2, 3, 10, 17, 24, 32, 25, 18, 11, 4, 5, 12, 19, 26, 33, 40, 48, 41, 34, 27,
    20, 13, 6, 7, 14, 21, 28, 35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51, 58,
    59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63,
];

/// Reference float IDCT of one block of zig-zag ordered quantized values,
/// dequantized with a zig-zag ordered table, level-shifted and clamped.
pub fn idct_block(coefficients: &[i32; 64], quant: &[u16; 64]) -> [u8; 64] {
    let mut f = [0f64; 64];
    for k in 0..64 {
        f[ZIGZAG[k]] = coefficients[k] as f64 * quant[k] as f64;
    }
    let mut out = [0u8; 64];
    for y in 0..8 {
        for x in 0..8 {
            let mut s = 0.0;
            for v in 0..8 {
                for u in 0..8 {
                    let cu = if u == 0 { std::f64::consts::FRAC_1_SQRT_2 } else { 1.0 };
                    let cv = if v == 0 { std::f64::consts::FRAC_1_SQRT_2 } else { 1.0 };
                    s += cu
                        * cv
                        * f[v * 8 + u]
                        * (((2 * x + 1) as f64 * u as f64 * std::f64::consts::PI) / 16.0).cos()
                        * (((2 * y + 1) as f64 * v as f64 * std::f64::consts::PI) / 16.0).cos();
                }
            }
            out[y * 8 + x] = (s / 4.0 + 128.0).round().clamp(0.0, 255.0) as u8;
        }
    }
    out
}

/// Quantization tables by id, zig-zag ordered, read straight from DQT segments.
pub fn quant_tables(file: &[u8]) -> Vec<(u8, [u16; 64])> {
    let mut tables = Vec::new();
    let mut i = 2;
    while i + 4 <= file.len() && file[i] == 0xFF {
        let m = file[i + 1];
        if m == 0xDA || m == 0xD9 {
            break;
        }
        let len = u16::from_be_bytes([file[i + 2], file[i + 3]]) as usize;
        if m == 0xDB {
            let mut p = &file[i + 4..i + 2 + len];
            while !p.is_empty() {
                let wide = p[0] >> 4 == 1;
                let id = p[0] & 15;
                let mut q = [0u16; 64];
                for (k, v) in q.iter_mut().enumerate() {
                    *v = if wide {
                        u16::from_be_bytes([p[1 + 2 * k], p[2 + 2 * k]])
                    } else {
                        p[1 + k] as u16
                    };
                }
                tables.push((id, q));
                p = &p[if wide { 129 } else { 65 }..];
            }
        }
        i += 2 + len;
    }
    tables
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn idct_of_dc_only_block_is_flat() {
        let mut c = [0i32; 64];
        c[0] = 80; // 80 * 1 / 8 = 10
        let out = idct_block(&c, &[1; 64]);
        assert!(out.iter().all(|&p| p == 138));
    }

    #[test]
    fn psnr_of_identical_images_is_infinite() {
        assert!(psnr(&[1, 2, 3], &[1, 2, 3]).is_infinite());
        assert!((psnr(&[0], &[255]) - 0.0).abs() < 1e-9);
    }
}
