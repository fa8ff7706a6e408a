//! Acceptance criteria, one PASS/FAIL line each. Run with
//! `cargo test -p jpegveil-harness --test acceptance -- --nocapture`.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use jpegveil_core::{analyze, encrypt_jpeg, ByteClass, CipherConfig, Components, TokenKind};
use jpegveil_harness::client::{connect_tls, exchange, request, via_proxy, Tunnel};
use jpegveil_harness::corpus::{standard_corpus, CorpusImage, CorpusSpec};
use jpegveil_harness::decode::{decode, psnr};
use jpegveil_harness::equivalence::compare;
use jpegveil_harness::pki::{client_config, TestPki};
use jpegveil_harness::stub::StubServer;
use jpegveil_harness::tiny::hand_built;
use jpegveil_proxy::{CertificateAuthority, Direction, LeafCache, Proxy, ProxyRule, ProxySettings, Resolver, RuleSet, SystemClock};
use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};

const MIN_CORPUS: usize = 24;
const SIZE_BUDGET: Duration = Duration::from_secs(10);
const PROXY_BUDGET: Duration = Duration::from_secs(30);
const RANDOM_KEYS: usize = 10;
const HAND_BUILT_RANDOM: usize = 250;
const SIGMAS: f64 = 3.0;
const CHILD_ENV: &str = "JPEGVEIL_ACCEPTANCE_CHILD_OUT";

type Outcome = Result<String, String>;
type Criterion<'a> = Box<dyn FnOnce() -> Outcome + 'a>;

fn key(n: u8) -> Vec<u8> {
    (0..32u8).map(|i| i.wrapping_mul(13) ^ n).collect()
}

fn config(key: Vec<u8>) -> CipherConfig {
    CipherConfig::new(key, Components::Both).unwrap()
}

fn corpus() -> &'static [CorpusImage] {
    standard_corpus()
}

fn huff_codes(file: &[u8]) -> Result<Vec<(u64, u32, u32)>, String> {
    let a = analyze(file, Components::Both).map_err(|e| e.to_string())?;
    let data = a.jpeg.entropy_bytes(file);
    Ok(a.tokens
        .iter()
        .filter(|t| t.kind == TokenKind::HuffCode)
        .map(|t| (t.bit_start, t.bit_len, a.tokens.read_bits(data, t)))
        .collect())
}

fn size_preservation() -> Outcome {
    let images = corpus();
    if images.len() < MIN_CORPUS {
        return Err(format!("corpus has {} files, need {MIN_CORPUS}", images.len()));
    }
    let cfg = config(key(1));
    let start = Instant::now();
    for img in images {
        let out = encrypt_jpeg(&img.bytes, &cfg).map_err(|e| format!("{}: {e}", img.name))?;
        if out.bytes.len() != img.bytes.len() {
            return Err(format!("{}: delta {}", img.name, out.bytes.len() as i64 - img.bytes.len() as i64));
        }
    }
    let took = start.elapsed();
    if took > SIZE_BUDGET {
        return Err(format!("took {took:?}, budget {SIZE_BUDGET:?}"));
    }
    Ok(format!("{} files, every delta 0, {took:.2?}", images.len()))
}

fn format_preservation() -> Outcome {
    let cfg = config(key(2));
    for img in corpus() {
        let enc = encrypt_jpeg(&img.bytes, &cfg).unwrap().bytes;
        decode(&enc).map_err(|e| format!("{}: decoder error {e}", img.name))?;
        if huff_codes(&enc)? != huff_codes(&img.bytes)? {
            return Err(format!("{}: Huffman code spans differ", img.name));
        }
    }
    Ok(format!("{} ciphertexts decode; Huffman spans identical", corpus().len()))
}

fn involution() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0xACCE_0003);
    for _ in 0..RANDOM_KEYS {
        let len = rng.random_range(16..=64usize);
        let k: Vec<u8> = (0..len).map(|_| rng.random()).collect();
        let cfg = config(k);
        for img in corpus() {
            let enc = encrypt_jpeg(&img.bytes, &cfg).unwrap().bytes;
            if encrypt_jpeg(&enc, &cfg).unwrap().bytes != img.bytes {
                return Err(format!("{}: decrypt(encrypt(x)) != x", img.name));
            }
        }
    }
    Ok(format!("{} files x {RANDOM_KEYS} keys restored exactly", corpus().len()))
}

fn stuffing_invariance() -> Outcome {
    let cfg = config(key(4));
    let mut pairs_total = 0;
    for img in corpus() {
        let a = analyze(&img.bytes, Components::Both).unwrap();
        let range = a.jpeg.entropy.range();
        let enc = encrypt_jpeg(&img.bytes, &cfg).unwrap().bytes;
        let (p, c) = (&img.bytes[range.clone()], &enc[range]);
        let pairs = |d: &[u8]| d.windows(2).filter(|w| w == &[0xFF, 0x00]).count();
        if pairs(p) != pairs(c) {
            return Err(format!("{}: FF 00 count {} -> {}", img.name, pairs(p), pairs(c)));
        }
        if let Some(i) = (0..p.len()).find(|&i| c[i] == 0xFF && p[i] != 0xFF) {
            return Err(format!("{}: new FF at entropy byte {i}", img.name));
        }
        pairs_total += pairs(p);
    }
    Ok(format!("{pairs_total} FF 00 pairs unchanged; no new FF bytes"))
}

fn oracle_equivalence() -> Outcome {
    let images = hand_built(HAND_BUILT_RANDOM);
    for (name, img) in &images {
        let file = img.encode();
        for c in [Components::Both, Components::DcOnly, Components::AcOnly] {
            compare(&file, c).map_err(|e| format!("{name} ({c}): {e}"))?;
        }
    }
    Ok(format!("{} hand-built images x 3 component settings agree", images.len()))
}

fn classification_completeness() -> Outcome {
    let mut stuffed = 0;
    for img in corpus() {
        let a = analyze(&img.bytes, Components::Both).unwrap();
        let data = a.jpeg.entropy_bytes(&img.bytes);
        if a.bytes.histogram.total() != data.len() as u64 {
            return Err(format!("{}: histogram {} != {} bytes", img.name, a.bytes.histogram.total(), data.len()));
        }
        for i in 1..data.len() {
            if data[i - 1] == 0xFF && data[i] == 0x00 {
                if a.bytes.classes[i] != ByteClass::StuffedZero {
                    return Err(format!("{}: byte {i} after FF is {:?}", img.name, a.bytes.classes[i]));
                }
                stuffed += 1;
            }
        }
    }
    Ok(format!("histograms complete; {stuffed} stuffed zeros classified"))
}

struct Loopback {
    stub: StubServer,
    tls_stub: StubServer,
    proxy: jpegveil_proxy::ProxyHandle,
    proxy_ca: Arc<CertificateAuthority>,
    origin_ca: rustls::pki_types::CertificateDer<'static>,
}

async fn loopback() -> Loopback {
    let origin = TestPki::new("acceptance origin ca");
    let stub = StubServer::start().await.unwrap();
    let tls_stub = StubServer::start_tls(origin.server_config(&["photos.test", "elsewhere.test"])).await.unwrap();
    let mut resolve = HashMap::new();
    for host in ["photos.test", "elsewhere.test"] {
        resolve.insert(format!("{host}:80"), stub.addr().to_string());
        resolve.insert(format!("{host}:443"), tls_stub.addr().to_string());
    }
    let proxy_ca = Arc::new(CertificateAuthority::generate("acceptance proxy ca", time::OffsetDateTime::now_utc()).unwrap());
    let rules = RuleSet::new(vec![ProxyRule {
        pattern: "photos.test".parse().unwrap(),
        directions: vec![Direction::EncryptUploads, Direction::DecryptDownloads],
        config: Arc::new(config(key(7))),
    }]);
    let leaves = LeafCache::new(proxy_ca.clone(), Arc::new(SystemClock), time::Duration::days(1));
    let settings = ProxySettings::new(rules, Some(leaves), Resolver::new(resolve), vec![origin.ca_der.clone()], false, 64 << 20);
    let proxy = Proxy::bind("127.0.0.1:0", settings).await.unwrap().spawn().unwrap();
    Loopback {
        stub,
        tls_stub,
        proxy,
        proxy_ca,
        origin_ca: origin.ca_der,
    }
}

/// One representative image per source.
fn samples() -> Vec<&'static CorpusImage> {
    let mut seen = Vec::new();
    corpus()
        .iter()
        .filter(|i| i.quality == 80 && i.restart_interval == 0)
        .filter(|i| {
            let fresh = !seen.contains(&i.source);
            seen.push(i.source.clone());
            fresh
        })
        .collect()
}

fn check_stored(stored: &jpegveil_harness::stub::StoredObject, original: &[u8], what: &str) -> Result<(), String> {
    if stored.body.len() != original.len() {
        return Err(format!("{what}: stored {} bytes, sent {}", stored.body.len(), original.len()));
    }
    if stored.body == original {
        return Err(format!("{what}: stored body is plaintext"));
    }
    if stored.header("content-length") != Some(original.len().to_string().as_str()) {
        return Err(format!("{what}: Content-Length changed to {:?}", stored.header("content-length")));
    }
    Ok(())
}

async fn end_to_end() -> Outcome {
    let start = Instant::now();
    let rig = loopback().await;
    let addr = rig.proxy.addr();
    let trust = client_config(rig.proxy_ca.cert_der());
    let mut count = 0;
    for img in samples() {
        let path = format!("/{}.jpg", img.name);
        let up = request("PUT", &format!("http://photos.test{path}"), "photos.test", &[("Content-Type", "image/jpeg")], &img.bytes, None);
        via_proxy(addr, &up).await.map_err(|e| e.to_string())?;
        let stored = rig.stub.store.object(&path).ok_or("nothing stored over http")?;
        check_stored(&stored, &img.bytes, "http")?;
        let head_len = up.windows(4).position(|w| w == b"\r\n\r\n").unwrap() + 4;
        if rig.stub.store.received().last().map(|r| &r[..head_len]) != Some(&up[..head_len]) {
            return Err("http: request head was modified".into());
        }
        let back = via_proxy(addr, &request("GET", &format!("http://photos.test{path}"), "photos.test", &[], &[], None))
            .await
            .map_err(|e| e.to_string())?;
        if back.body != img.bytes {
            return Err(format!("http: {} not restored on download", img.name));
        }

        let Tunnel::Open(mut tls) = connect_tls(addr, "photos.test:443", "photos.test", trust.clone()).await.map_err(|e| e.to_string())? else {
            return Err("tls: CONNECT refused".into());
        };
        let up = request("PUT", &path, "photos.test", &[("Content-Type", "image/jpeg")], &img.bytes, None);
        exchange(&mut tls, &up).await.map_err(|e| e.to_string())?;
        let stored = rig.tls_stub.store.object(&path).ok_or("nothing stored over tls")?;
        check_stored(&stored, &img.bytes, "tls")?;
        let back = exchange(&mut tls, &request("GET", &path, "photos.test", &[], &[], None)).await.map_err(|e| e.to_string())?;
        if back.body != img.bytes {
            return Err(format!("tls: {} not restored on download", img.name));
        }
        count += 1;
    }
    let took = start.elapsed();
    if took > PROXY_BUDGET {
        return Err(format!("took {took:?}, budget {PROXY_BUDGET:?}"));
    }
    Ok(format!("{count} images over http and intercepted tls, {took:.2?}"))
}

async fn non_interference() -> Outcome {
    let rig = loopback().await;
    let addr = rig.proxy.addr();
    let img = samples()[0];
    let up = request("PUT", "http://elsewhere.test/x.jpg", "elsewhere.test", &[("Content-Type", "image/jpeg")], &img.bytes, Some(1000));
    via_proxy(addr, &up).await.map_err(|e| e.to_string())?;
    if rig.stub.store.received()[0] != up {
        return Err("http request bytes changed".into());
    }
    let resp = via_proxy(addr, &request("GET", "http://elsewhere.test/x.jpg", "elsewhere.test", &[], &[], None))
        .await
        .map_err(|e| e.to_string())?;
    if resp.raw != rig.stub.store.sent()[1] {
        return Err("http response bytes changed".into());
    }

    let trust = client_config(&rig.origin_ca);
    let Tunnel::Open(mut tls) = connect_tls(addr, "elsewhere.test:443", "elsewhere.test", trust).await.map_err(|e| e.to_string())? else {
        return Err("tunnel refused".into());
    };
    let up = request("PUT", "/y.jpg", "elsewhere.test", &[("Content-Type", "image/jpeg")], &img.bytes, None);
    let resp = exchange(&mut tls, &up).await.map_err(|e| e.to_string())?;
    if rig.tls_stub.store.received()[0] != up || resp.raw != rig.tls_stub.store.sent()[0] {
        return Err("tunneled bytes changed".into());
    }
    Ok("plain and tunneled traffic to unmatched hosts byte-identical".into())
}

fn scrambling() -> Outcome {
    let threshold = CorpusSpec::standard().psnr_threshold_db;
    let cfg = config(key(9));
    let (mut worst_psnr, mut worst_z) = (f64::NEG_INFINITY, 0.0f64);
    for img in corpus() {
        let enc = encrypt_jpeg(&img.bytes, &cfg).unwrap();
        let n = enc.report.encrypted_bit_count as f64;
        let f = enc.report.flipped_bit_count as f64 / n;
        let z = (f - 0.5).abs() / (0.5 / n.sqrt());
        if z > SIGMAS {
            return Err(format!("{}: flipped fraction {f:.4} is {z:.2} sigma from 1/2", img.name));
        }
        let p = psnr(&decode(&img.bytes)?.pixels, &decode(&enc.bytes)?.pixels);
        if p >= threshold {
            return Err(format!("{}: PSNR {p:.2} dB not below {threshold} dB", img.name));
        }
        worst_psnr = worst_psnr.max(p);
        worst_z = worst_z.max(z);
    }
    Ok(format!("max {worst_z:.2} sigma; max PSNR {worst_psnr:.2} dB < {threshold} dB"))
}

fn ciphertext_for_determinism() -> Vec<u8> {
    let img = &corpus()[0];
    encrypt_jpeg(&img.bytes, &config(b"determinism across restarts!".to_vec())).unwrap().bytes
}

fn keystream_determinism() -> Outcome {
    let here = ciphertext_for_determinism();
    if ciphertext_for_determinism() != here {
        return Err("two runs in one process differ".into());
    }
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let exe = std::env::current_exe().map_err(|e| e.to_string())?;
    for run in 0..2 {
        let out = dir.path().join(format!("run{run}"));
        let status = std::process::Command::new(&exe)
            .args(["--exact", "determinism_child", "--test-threads", "1"])
            .env(CHILD_ENV, &out)
            .stdout(std::process::Stdio::null())
            .status()
            .map_err(|e| e.to_string())?;
        if !status.success() {
            return Err(format!("child process {run} failed"));
        }
        if std::fs::read(&out).map_err(|e| e.to_string())? != here {
            return Err(format!("child process {run} produced different ciphertext"));
        }
    }
    Ok("identical ciphertext in-process and in 2 fresh processes".into())
}

/// Writes the determinism ciphertext when launched by the parent test.
#[test]
fn determinism_child() {
    if let Some(path) = std::env::var_os(CHILD_ENV) {
        std::fs::write(path, ciphertext_for_determinism()).unwrap();
    }
}

#[test]
fn acceptance() {
    let runtime = tokio::runtime::Runtime::new().unwrap();
    let criteria: Vec<(&str, Criterion)> = vec![
        ("size preservation", Box::new(size_preservation)),
        ("format preservation", Box::new(format_preservation)),
        ("involution", Box::new(involution)),
        ("stuffing invariance", Box::new(stuffing_invariance)),
        ("oracle equivalence", Box::new(oracle_equivalence)),
        ("classification completeness", Box::new(classification_completeness)),
        ("end-to-end proxy loopback", Box::new(|| runtime.block_on(end_to_end()))),
        ("non-interference", Box::new(|| runtime.block_on(non_interference()))),
        ("scrambling", Box::new(scrambling)),
        ("keystream determinism", Box::new(keystream_determinism)),
    ];
    // Build the corpus up front so its cost is not charged to any budget.
    corpus();
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.into_iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                println!("FAIL {:>2} {name}: {detail}", i + 1);
                failed.push(name);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
