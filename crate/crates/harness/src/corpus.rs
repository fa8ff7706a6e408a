//! Deterministic test corpus built with an external baseline encoder.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use jpeg_encoder::{ColorType, Encoder, SamplingFactor};
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum Sampling {
    #[serde(rename = "gray")]
    Gray,
    #[serde(rename = "420")]
    S420,
    #[serde(rename = "444")]
    S444,
}

impl fmt::Display for Sampling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sampling::Gray => "gray",
            Sampling::S420 => "420",
            Sampling::S444 => "444",
        })
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct SourceSpec {
    pub name: String,
    /// PNG file relative to corpus.toml.
    pub png: Option<PathBuf>,
    /// Name of a procedural pattern, used when `png` is absent.
    pub pattern: Option<String>,
    pub width: Option<u16>,
    pub height: Option<u16>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct CorpusSpec {
    pub qualities: Vec<u8>,
    pub sampling: Vec<Sampling>,
    pub restart_intervals: Vec<u16>,
    pub psnr_threshold_db: f64,
    #[serde(rename = "source")]
    pub sources: Vec<SourceSpec>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl CorpusSpec {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut spec: CorpusSpec = toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        spec.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(spec)
    }

    /// The corpus.toml checked into this crate.
    pub fn standard() -> Self {
        Self::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("corpus.toml"))
            .expect("checked-in corpus spec parses")
    }
}

/// RGB source pixels.
#[derive(Debug, Clone)]
pub struct SourceImage {
    pub name: String,
    pub width: u16,
    pub height: u16,
    pub rgb: Vec<u8>,
}

impl SourceImage {
    pub fn luma(&self) -> Vec<u8> {
        self.rgb
            .chunks_exact(3)
            .map(|p| (0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64).round() as u8)
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct CorpusImage {
    pub name: String,
    pub source: String,
    pub quality: u8,
    pub sampling: Sampling,
    pub restart_interval: u16,
    pub bytes: Vec<u8>,
}

fn load_png(path: &Path) -> Result<(u16, u16, Vec<u8>), String> {
    let file = std::fs::File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut decoder = png::Decoder::new(std::io::BufReader::new(file));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder.read_info().map_err(|e| e.to_string())?;
    let mut buf = vec![0; reader.output_buffer_size().ok_or("png too large")?];
    let info = reader.next_frame(&mut buf).map_err(|e| e.to_string())?;
    buf.truncate(info.buffer_size());
    let rgb = match info.color_type {
        png::ColorType::Rgb => buf,
        png::ColorType::Rgba => buf.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect(),
        png::ColorType::Grayscale => buf.iter().flat_map(|&g| [g, g, g]).collect(),
        other => return Err(format!("unsupported png color type {other:?}")),
    };
    Ok((info.width as u16, info.height as u16, rgb))
}

/// A smooth pattern with some high-frequency texture, deterministic.
fn rings(width: u16, height: u16) -> Vec<u8> {
    let mut rgb = Vec::with_capacity(width as usize * height as usize * 3);
    let (cx, cy) = (width as f64 / 2.0, height as f64 / 2.0);
    for y in 0..height as u32 {
        for x in 0..width as u32 {
            let d = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
            let hash = x.wrapping_mul(374_761_393) ^ y.wrapping_mul(668_265_263);
            let noise = (hash.wrapping_mul(1_274_126_177) >> 27) as f64;
            let r = 128.0 + 100.0 * (d / 6.0).sin() + noise;
            let g = 255.0 * x as f64 / width as f64;
            let b = 128.0 + 90.0 * ((x + 2 * y) as f64 / 9.0).cos() - noise;
            rgb.extend([r, g, b].map(|v| v.round().clamp(0.0, 255.0) as u8));
        }
    }
    rgb
}

pub fn load_source(spec: &SourceSpec, base_dir: &Path) -> Result<SourceImage, String> {
    let (width, height, rgb) = match (&spec.png, spec.pattern.as_deref()) {
        (Some(p), _) => load_png(&base_dir.join(p))?,
        (None, Some("rings")) => {
            let (w, h) = (spec.width.unwrap_or(128), spec.height.unwrap_or(128));
            (w, h, rings(w, h))
        }
        (None, other) => return Err(format!("source {}: unknown pattern {other:?}", spec.name)),
    };
    Ok(SourceImage {
        name: spec.name.clone(),
        width,
        height,
        rgb,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct EncodeOptions {
    pub quality: u8,
    pub sampling: Sampling,
    pub restart_interval: u16,
    pub progressive: bool,
}

pub fn encode(src: &SourceImage, opts: EncodeOptions) -> Result<Vec<u8>, String> {
    let mut out = Vec::new();
    let mut enc = Encoder::new(&mut out, opts.quality);
    if opts.restart_interval > 0 {
        enc.set_restart_interval(opts.restart_interval);
    }
    enc.set_progressive(opts.progressive);
    let result = match opts.sampling {
        Sampling::Gray => enc.encode(&src.luma(), src.width, src.height, ColorType::Luma),
        s => {
            enc.set_sampling_factor(if s == Sampling::S420 {
                SamplingFactor::R_4_2_0
            } else {
                SamplingFactor::R_4_4_4
            });
            enc.encode(&src.rgb, src.width, src.height, ColorType::Rgb)
        }
    };
    result.map_err(|e| e.to_string())?;
    Ok(out)
}

pub fn build_corpus(spec: &CorpusSpec) -> Result<Vec<CorpusImage>, String> {
    let mut images = Vec::new();
    for source in &spec.sources {
        let src = load_source(source, &spec.base_dir)?;
        for &quality in &spec.qualities {
            for &sampling in &spec.sampling {
                for &restart_interval in &spec.restart_intervals {
                    let bytes = encode(
                        &src,
                        EncodeOptions {
                            quality,
                            sampling,
                            restart_interval,
                            progressive: false,
                        },
                    )?;
                    images.push(CorpusImage {
                        name: format!("{}-q{quality}-{sampling}-r{restart_interval}", src.name),
                        source: src.name.clone(),
                        quality,
                        sampling,
                        restart_interval,
                        bytes,
                    });
                }
            }
        }
    }
    Ok(images)
}

/// The standard corpus, built once per process.
pub fn standard_corpus() -> &'static [CorpusImage] {
    static CORPUS: OnceLock<Vec<CorpusImage>> = OnceLock::new();
    CORPUS.get_or_init(|| build_corpus(&CorpusSpec::standard()).expect("corpus builds"))
}

/// A progressive encoding of the first corpus source, for rejection tests.
pub fn progressive_sample() -> Vec<u8> {
    let spec = CorpusSpec::standard();
    let src = load_source(&spec.sources[0], &spec.base_dir).expect("source loads");
    encode(
        &src,
        EncodeOptions {
            quality: 80,
            sampling: Sampling::S420,
            restart_interval: 0,
            progressive: true,
        },
    )
    .expect("progressive encode")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_parses_and_covers_the_grid() {
        let spec = CorpusSpec::standard();
        assert_eq!(spec.qualities, vec![50, 80, 95]);
        let n = spec.sources.len() * spec.qualities.len() * spec.sampling.len() * spec.restart_intervals.len();
        assert!(n >= 24);
    }

    #[test]
    fn rings_is_deterministic() {
        assert_eq!(rings(31, 17), rings(31, 17));
    }
}
