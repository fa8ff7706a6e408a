use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use jpegveil_core::bitstream::MarkerKind;
use jpegveil_core::{analyze, encrypt_jpeg, CipherConfig, Components, TokenKind};
use jpegveil_proxy::{KeySource, Proxy, ProxyConfig};

#[derive(Parser)]
#[command(name = "jpegveil", version, about = "Size-preserving encryption of baseline JPEG files")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Encrypt the entropy-coded data of a JPEG file
    Encrypt(CipherArgs),
    /// Decrypt a file produced by `encrypt` (the same operation)
    Decrypt(CipherArgs),
    /// Show markers, scan layout and byte classes of a JPEG file
    Inspect {
        #[arg(long = "in", value_name = "PATH")]
        input: PathBuf,
    },
    /// Check that two files have equal size and identical Huffman structure
    Verify { a: PathBuf, b: PathBuf },
    /// Run the intercepting proxy
    Proxy {
        #[arg(long, value_name = "PATH")]
        config: PathBuf,
    },
}

#[derive(Args)]
struct CipherArgs {
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    #[arg(long = "out", value_name = "PATH")]
    output: PathBuf,
    /// File whose raw bytes are the key (16 to 64 bytes)
    #[arg(long, value_name = "PATH", group = "key", required = true)]
    key_file: Option<PathBuf>,
    /// Environment variable holding the key
    #[arg(long, value_name = "NAME", group = "key")]
    key_env: Option<String>,
    #[arg(long, default_value = "both", value_parser = parse_components)]
    components: Components,
}

fn parse_components(s: &str) -> Result<Components, String> {
    s.parse()
}

/// A failure reported as `error: <code>: <detail>`.
struct Failure {
    code: String,
    detail: String,
}

impl Failure {
    fn new(code: impl Into<String>, detail: impl fmt::Display) -> Self {
        Failure {
            code: code.into(),
            detail: detail.to_string(),
        }
    }
}

impl From<jpegveil_core::CipherError> for Failure {
    fn from(e: jpegveil_core::CipherError) -> Self {
        Failure::new(e.code(), e)
    }
}

impl From<jpegveil_core::JpegError> for Failure {
    fn from(e: jpegveil_core::JpegError) -> Self {
        Failure::new(e.code(), e)
    }
}

impl From<jpegveil_proxy::ConfigError> for Failure {
    fn from(e: jpegveil_proxy::ConfigError) -> Self {
        Failure::new(e.code(), e)
    }
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    std::fs::read(path).map_err(|e| Failure::new("io", format!("{}: {e}", path.display())))
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => a == b,
    }
}

/// Writes through a temporary file in the destination directory so a
/// failure never leaves a partial output behind.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    let io = |e: std::io::Error| Failure::new("io", format!("{}: {e}", path.display()));
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

fn cipher(args: CipherArgs) -> Result<(), Failure> {
    if same_file(&args.input, &args.output) {
        return Err(Failure::new("same-path", "input and output must differ"));
    }
    let key = KeySource {
        file: args.key_file,
        env: args.key_env,
    }
    .load()?;
    let input = read(&args.input)?;
    let out = encrypt_jpeg(&input, &CipherConfig { key, components: args.components })?;
    write_atomic(&args.output, &out.bytes)?;
    println!("{}", out.report);
    println!("size_difference={}", out.bytes.len() as i64 - input.len() as i64);
    Ok(())
}

fn marker_name(kind: MarkerKind) -> String {
    match kind {
        MarkerKind::Soi => "SOI".into(),
        MarkerKind::Eoi => "EOI".into(),
        MarkerKind::Sos => "SOS".into(),
        MarkerKind::Sof0 => "SOF0".into(),
        MarkerKind::Dht => "DHT".into(),
        MarkerKind::Dqt => "DQT".into(),
        MarkerKind::Dri => "DRI".into(),
        MarkerKind::App(n) => format!("APP{n}"),
        MarkerKind::Com => "COM".into(),
        MarkerKind::Rst(n) => format!("RST{n}"),
        MarkerKind::Other => "other".into(),
    }
}

fn inspect(path: &Path) -> Result<(), Failure> {
    let bytes = read(path)?;
    let a = analyze(&bytes, Components::Both)?;
    for seg in &a.jpeg.segments {
        println!(
            "marker offset={} code=FF{:02X} name={} length={}",
            seg.offset,
            seg.marker,
            marker_name(seg.kind),
            seg.payload.len
        );
    }
    let f = &a.jpeg.frame;
    println!("dimensions={}x{}", f.width, f.height);
    for c in &f.components {
        println!("component id={} sampling={}x{} quant_table={}", c.id, c.h, c.v, c.quant_table);
    }
    let s = &a.jpeg.scan;
    println!("mcus={}x{} restart_interval={}", s.mcus_wide, s.mcus_high, s.restart_interval);
    println!("entropy_offset={}", a.jpeg.entropy.offset);
    println!("{}", a.report(bytes.len()));
    Ok(())
}

fn huffman_spans(bytes: &[u8]) -> Result<Vec<(u64, u32, u32)>, jpegveil_core::JpegError> {
    let a = analyze(bytes, Components::Both)?;
    let data = a.jpeg.entropy_bytes(bytes);
    Ok(a.tokens
        .iter()
        .filter(|t| t.kind == TokenKind::HuffCode)
        .map(|t| (t.bit_start, t.bit_len, a.tokens.read_bits(data, t)))
        .collect())
}

fn verify(a: &Path, b: &Path) -> Result<(), Failure> {
    let (x, y) = (read(a)?, read(b)?);
    let diff = y.len() as i64 - x.len() as i64;
    println!("size_a={}", x.len());
    println!("size_b={}", y.len());
    println!("difference={diff:+}");
    let spans_a = huffman_spans(&x).map_err(|e| Failure::new(e.code(), format!("{}: {e}", a.display())))?;
    let spans_b = huffman_spans(&y).map_err(|e| Failure::new(e.code(), format!("{}: {e}", b.display())))?;
    let same = spans_a == spans_b;
    println!("huffman_codes={}", if same { "identical" } else { "different" });
    if diff != 0 {
        return Err(Failure::new("size-mismatch", format!("difference {diff:+} bytes")));
    }
    if !same {
        return Err(Failure::new("structure-mismatch", "Huffman code spans differ"));
    }
    Ok(())
}

fn proxy(path: &Path) -> Result<(), Failure> {
    let config = ProxyConfig::load(path)?;
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .or_else(|_| tracing_subscriber::EnvFilter::try_new(&config.log_level))
        .map_err(|e| Failure::new("config-parse", format!("log_level: {e}")))?;
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).init();
    let settings = config.settings()?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::new("io", e))?;
    runtime.block_on(async {
        let proxy = Proxy::bind(config.listen.as_str(), settings)
            .await
            .map_err(|e| Failure::new("io", format!("bind {}: {e}", config.listen)))?;
        let addr = proxy.local_addr().map_err(|e| Failure::new("io", e))?;
        tracing::info!(%addr, "proxy listening");
        proxy.run().await.map_err(|e| Failure::new("io", e))
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Encrypt(args) | Command::Decrypt(args) => cipher(args),
        Command::Inspect { input } => inspect(&input),
        Command::Verify { a, b } => verify(&a, &b),
        Command::Proxy { config } => proxy(&config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let detail = f.detail.replace(['\n', '\r'], " ");
            eprintln!("error: {}: {detail}", f.code);
            ExitCode::FAILURE
        }
    }
}
