//! An HTTP/1.1 proxy that encrypts JPEG uploads and decrypts JPEG downloads
//! for configured hosts without changing any byte count.

pub mod ca;
pub mod config;
pub mod detect;
pub mod http;
pub mod rewrite;
pub mod rules;
pub mod server;

use std::sync::Arc;

pub use ca::{CertificateAuthority, Clock, LeafCache, SystemClock};
pub use config::{ConfigError, KeySource, ProxyConfig};
pub use detect::{detect_jpeg_spans, Container, JpegSpan};
pub use rewrite::{handle_request, handle_response, Message, RewriteReport};
pub use rules::{Direction, HostPattern, ProxyRule, RuleSet};
pub use server::{Proxy, ProxyHandle, ProxySettings, Resolver};

/// The TLS backend used on both sides of intercepted connections.
pub fn crypto_provider() -> Arc<rustls::crypto::CryptoProvider> {
    Arc::new(rustls::crypto::ring::default_provider())
}
