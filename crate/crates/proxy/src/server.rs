//! The proxy listener: absolute-form HTTP forwarding and CONNECT handling.

use std::collections::HashMap;
use std::io;
use std::net::SocketAddr;
use std::pin::Pin;
use std::sync::Arc;
use std::task::{Context, Poll};
use std::time::Duration;

use rustls::pki_types::{CertificateDer, ServerName};
use rustls::{ClientConfig, RootCertStore};
use tokio::io::{AsyncRead, AsyncWrite, AsyncWriteExt, BufReader, ReadBuf};
use tokio::net::{TcpListener, TcpStream, ToSocketAddrs};
use tokio::task::JoinHandle;
use tokio_rustls::{TlsAcceptor, TlsConnector};

use crate::ca::LeafCache;
use crate::detect::is_candidate;
use crate::http::{read_head, relay_body, Body, Framing, Head, Relayed};
use crate::rewrite::{log, rewrite_body, RewriteReport};
use crate::rules::{host_of, Direction, RuleSet};

const CONNECT_TIMEOUT: Duration = Duration::from_secs(10);
const BAD_GATEWAY: &[u8] = b"HTTP/1.1 502 Bad Gateway\r\nContent-Length: 0\r\nConnection: close\r\n\r\n";
const BAD_REQUEST: &[u8] = b"HTTP/1.1 400 Bad Request\r\nContent-Length: 0\r\nConnection: close\r\n\r\n";

pub trait Io: AsyncRead + AsyncWrite + Unpin + Send {}
impl<T: AsyncRead + AsyncWrite + Unpin + Send> Io for T {}
type Stream = Box<dyn Io>;

/// Maps authorities to the socket addresses actually dialed.
#[derive(Debug, Clone, Default)]
pub struct Resolver {
    overrides: HashMap<String, String>,
}

impl Resolver {
    /// Keys are `host:port` or bare `host`, matched case-insensitively.
    pub fn new(overrides: HashMap<String, String>) -> Self {
        let overrides = overrides.into_iter().map(|(k, v)| (k.to_ascii_lowercase(), v)).collect();
        Resolver { overrides }
    }

    pub fn resolve(&self, authority: &str, default_port: u16) -> String {
        let authority = authority.to_ascii_lowercase();
        let host = host_of(&authority);
        let with_port = if host.len() == authority.len() || authority.ends_with(']') {
            format!("{authority}:{default_port}")
        } else {
            authority.clone()
        };
        self.overrides
            .get(&with_port)
            .or_else(|| self.overrides.get(host))
            .cloned()
            .unwrap_or(with_port)
    }
}

/// Immutable state shared by every connection.
#[derive(Debug)]
pub struct ProxySettings {
    pub rules: RuleSet,
    /// Absent when no CA is configured; every CONNECT is then tunneled.
    pub leaves: Option<LeafCache>,
    pub resolver: Resolver,
    pub upstream_tls: Arc<ClientConfig>,
    pub body_cap: usize,
}

impl ProxySettings {
    pub fn new(
        rules: RuleSet,
        leaves: Option<LeafCache>,
        resolver: Resolver,
        extra_roots: Vec<CertificateDer<'static>>,
        public_roots: bool,
        body_cap: usize,
    ) -> Self {
        let mut roots = RootCertStore::empty();
        if public_roots {
            roots.extend(webpki_roots::TLS_SERVER_ROOTS.iter().cloned());
        }
        for cert in extra_roots {
            if let Err(e) = roots.add(cert) {
                tracing::warn!(error = %e, "ignoring unusable upstream root");
            }
        }
        let mut tls = ClientConfig::builder_with_provider(crate::crypto_provider())
            .with_safe_default_protocol_versions()
            .expect("ring supports the default protocol versions")
            .with_root_certificates(roots)
            .with_no_client_auth();
        tls.alpn_protocols = vec![b"http/1.1".to_vec()];
        ProxySettings {
            rules,
            leaves,
            resolver,
            upstream_tls: Arc::new(tls),
            body_cap,
        }
    }
}

pub struct Proxy {
    listener: TcpListener,
    settings: Arc<ProxySettings>,
}

impl Proxy {
    pub async fn bind(addr: impl ToSocketAddrs, settings: ProxySettings) -> io::Result<Self> {
        Ok(Proxy {
            listener: TcpListener::bind(addr).await?,
            settings: Arc::new(settings),
        })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    pub async fn run(self) -> io::Result<()> {
        loop {
            let (stream, peer) = self.listener.accept().await?;
            let settings = self.settings.clone();
            tokio::spawn(async move {
                let _ = stream.set_nodelay(true);
                if let Err(e) = serve(Box::new(stream), None, &settings).await {
                    tracing::debug!(%peer, error = %e, "connection ended with error");
                }
            });
        }
    }

    /// Runs the proxy on the current runtime until the handle is dropped.
    pub fn spawn(self) -> io::Result<ProxyHandle> {
        let addr = self.local_addr()?;
        let task = tokio::spawn(async move {
            if let Err(e) = self.run().await {
                tracing::error!(error = %e, "proxy listener failed");
            }
        });
        Ok(ProxyHandle { addr, task })
    }
}

pub struct ProxyHandle {
    addr: SocketAddr,
    task: JoinHandle<()>,
}

impl ProxyHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }
}

impl Drop for ProxyHandle {
    fn drop(&mut self) {
        self.task.abort();
    }
}

/// Authority of an `http://` absolute-form request target.
pub fn absolute_authority(target: &str) -> Option<&str> {
    let scheme = target.get(..7)?;
    if !scheme.eq_ignore_ascii_case("http://") {
        return None;
    }
    let rest = &target[7..];
    let end = rest.find(['/', '?', '#']).unwrap_or(rest.len());
    let authority = &rest[..end];
    (!authority.is_empty()).then_some(authority)
}

struct Upstream {
    authority: String,
    io: BufReader<Stream>,
}

async fn dial(authority: &str, secure: bool, settings: &ProxySettings) -> io::Result<Stream> {
    let addr = settings.resolver.resolve(authority, if secure { 443 } else { 80 });
    let tcp = tokio::time::timeout(CONNECT_TIMEOUT, TcpStream::connect(&addr))
        .await
        .map_err(|_| io::Error::new(io::ErrorKind::TimedOut, format!("connecting to {addr}")))??;
    let _ = tcp.set_nodelay(true);
    if !secure {
        return Ok(Box::new(tcp));
    }
    let name = ServerName::try_from(host_of(authority).to_string())
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))?;
    let tls = tokio::time::timeout(CONNECT_TIMEOUT, TlsConnector::from(settings.upstream_tls.clone()).connect(name, tcp))
        .await
        .map_err(|_| io::Error::new(io::ErrorKind::TimedOut, "origin tls handshake"))??;
    Ok(Box::new(tls))
}

/// Whether a body should be buffered for rewriting; logs why not otherwise.
fn rewrite_config<'a>(
    settings: &'a ProxySettings,
    authority: &str,
    head: &Head,
    direction: Direction,
) -> Option<&'a jpegveil_core::CipherConfig> {
    let cfg = settings.rules.config_for(authority, direction)?;
    if !is_candidate(head.content_type()) {
        return None;
    }
    if !head.identity_encoded() {
        log(host_of(authority), direction, &RewriteReport {
            skipped: vec!["content-encoding".into()],
            ..Default::default()
        });
        return None;
    }
    Some(cfg)
}

async fn relay<R, W>(
    r: &mut R,
    w: &mut W,
    head: &Head,
    framing: Framing,
    authority: &str,
    direction: Direction,
    settings: &ProxySettings,
) -> io::Result<()>
where
    R: tokio::io::AsyncBufRead + Unpin,
    W: AsyncWrite + Unpin,
{
    let cfg = rewrite_config(settings, authority, head, direction);
    let host = host_of(authority);
    let rewrite = cfg.map(|cfg| move |body: &mut Body| {
        rewrite_body(head, body, cfg, host, direction);
    });
    if let Relayed::Streamed { over_cap: true } = relay_body(r, w, framing, settings.body_cap, rewrite).await? {
        log(host, direction, &RewriteReport {
            skipped: vec!["body-over-cap".into()],
            ..Default::default()
        });
    }
    Ok(())
}

/// Serves HTTP/1.1 requests from `client`. `intercepted` names the origin
/// when the connection is a decrypted CONNECT tunnel.
fn serve<'a>(
    client: Stream,
    intercepted: Option<Upstream>,
    settings: &'a ProxySettings,
) -> Pin<Box<dyn std::future::Future<Output = io::Result<()>> + Send + 'a>> {
    Box::pin(async move {
        let secure = intercepted.is_some();
        let fixed_authority = intercepted.as_ref().map(|u| u.authority.clone());
        let mut upstream = intercepted;
        let mut client = BufReader::new(client);
        loop {
            let Some(head) = read_head(&mut client, true).await? else {
                return Ok(());
            };
            let method = head.method().unwrap_or_default().to_string();
            let target = head.target().unwrap_or_default().to_string();
            if method.eq_ignore_ascii_case("CONNECT") {
                if secure {
                    client.write_all(BAD_REQUEST).await?;
                    return Ok(());
                }
                let leftover = client.buffer().to_vec();
                let stream = Prefixed {
                    prefix: leftover,
                    pos: 0,
                    inner: client.into_inner(),
                };
                return connect(Box::new(stream), &target, settings).await;
            }
            let authority = match &fixed_authority {
                Some(a) => a.clone(),
                None => match absolute_authority(&target) {
                    Some(a) => a.to_string(),
                    None => {
                        client.write_all(BAD_REQUEST).await?;
                        return Ok(());
                    }
                },
            };
            let Ok(framing) = head.request_framing() else {
                client.write_all(BAD_REQUEST).await?;
                return Ok(());
            };

            if upstream.as_ref().is_none_or(|u| u.authority != authority) {
                match dial(&authority, secure, settings).await {
                    Ok(io) => {
                        upstream = Some(Upstream {
                            authority: authority.clone(),
                            io: BufReader::new(io),
                        })
                    }
                    Err(e) => {
                        tracing::warn!(host = host_of(&authority), error = %e, "origin unreachable");
                        client.write_all(BAD_GATEWAY).await?;
                        return Ok(());
                    }
                }
            }
            let up = upstream.as_mut().expect("connected above");
            up.io.write_all(&head.raw).await?;
            relay(&mut client, &mut up.io, &head, framing, &authority, Direction::EncryptUploads, settings).await?;

            let mut close = head.wants_close();
            loop {
                let response = match read_head(&mut up.io, false).await {
                    Ok(Some(h)) => h,
                    Ok(None) | Err(_) => {
                        client.write_all(BAD_GATEWAY).await?;
                        return Ok(());
                    }
                };
                client.write_all(&response.raw).await?;
                let status = response.status().unwrap_or(0);
                if status == 101 {
                    client.flush().await?;
                    tokio::io::copy_bidirectional(&mut client, &mut up.io).await?;
                    return Ok(());
                }
                let framing = response.response_framing(&method)?;
                relay(&mut up.io, &mut client, &response, framing, &authority, Direction::DecryptDownloads, settings)
                    .await?;
                if (100..200).contains(&status) {
                    continue;
                }
                close |= response.wants_close() || framing == Framing::UntilClose;
                break;
            }
            client.flush().await?;
            if close {
                client.shutdown().await.ok();
                return Ok(());
            }
        }
    })
}

async fn connect(mut client: Stream, target: &str, settings: &ProxySettings) -> io::Result<()> {
    let authority = target.to_string();
    let host = host_of(&authority).to_string();
    let intercept = settings.leaves.as_ref().filter(|_| settings.rules.intercepts(&authority));
    let Some(leaves) = intercept else {
        let addr = settings.resolver.resolve(&authority, 443);
        let mut origin = match tokio::time::timeout(CONNECT_TIMEOUT, TcpStream::connect(&addr)).await {
            Ok(Ok(s)) => s,
            _ => {
                client.write_all(BAD_GATEWAY).await?;
                return Ok(());
            }
        };
        client.write_all(b"HTTP/1.1 200 Connection Established\r\n\r\n").await?;
        client.flush().await?;
        tracing::debug!(host = %host, "tunneling without interception");
        tokio::io::copy_bidirectional(&mut client, &mut origin).await?;
        return Ok(());
    };

    // Reach the origin first so a failure can still be reported in plain HTTP.
    let origin = match dial(&authority, true, settings).await {
        Ok(s) => s,
        Err(e) => {
            tracing::warn!(host = %host, error = %e, "origin tls failed");
            client.write_all(BAD_GATEWAY).await?;
            return Ok(());
        }
    };
    let leaf = match leaves.leaf(&host) {
        Ok(l) => l,
        Err(e) => {
            tracing::error!(host = %host, error = %e, "leaf certificate unavailable");
            client.write_all(BAD_GATEWAY).await?;
            return Ok(());
        }
    };
    client.write_all(b"HTTP/1.1 200 Connection Established\r\n\r\n").await?;
    client.flush().await?;
    let tls = TlsAcceptor::from(leaf.server_config.clone()).accept(client).await?;
    let upstream = Upstream {
        authority,
        io: BufReader::new(origin),
    };
    serve(Box::new(tls), Some(upstream), settings).await
}

/// A stream with some already-read bytes put back in front.
struct Prefixed {
    prefix: Vec<u8>,
    pos: usize,
    inner: Stream,
}

impl AsyncRead for Prefixed {
    fn poll_read(mut self: Pin<&mut Self>, cx: &mut Context<'_>, buf: &mut ReadBuf<'_>) -> Poll<io::Result<()>> {
        if self.pos < self.prefix.len() {
            let n = buf.remaining().min(self.prefix.len() - self.pos);
            buf.put_slice(&self.prefix[self.pos..self.pos + n]);
            self.pos += n;
            return Poll::Ready(Ok(()));
        }
        Pin::new(&mut self.inner).poll_read(cx, buf)
    }
}

impl AsyncWrite for Prefixed {
    fn poll_write(mut self: Pin<&mut Self>, cx: &mut Context<'_>, buf: &[u8]) -> Poll<io::Result<usize>> {
        Pin::new(&mut self.inner).poll_write(cx, buf)
    }

    fn poll_flush(mut self: Pin<&mut Self>, cx: &mut Context<'_>) -> Poll<io::Result<()>> {
        Pin::new(&mut self.inner).poll_flush(cx)
    }

    fn poll_shutdown(mut self: Pin<&mut Self>, cx: &mut Context<'_>) -> Poll<io::Result<()>> {
        Pin::new(&mut self.inner).poll_shutdown(cx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn absolute_targets() {
        assert_eq!(absolute_authority("http://h:81/a?b"), Some("h:81"));
        assert_eq!(absolute_authority("HTTP://h"), Some("h"));
        assert_eq!(absolute_authority("/path"), None);
        assert_eq!(absolute_authority("https://h/"), None);
        assert_eq!(absolute_authority("http:///x"), None);
    }

    #[test]
    fn resolver_overrides() {
        let r = Resolver::new(HashMap::from([
            ("Photos.Test:443".to_string(), "127.0.0.1:1".to_string()),
            ("cdn.test".to_string(), "127.0.0.1:2".to_string()),
        ]));
        assert_eq!(r.resolve("photos.test:443", 443), "127.0.0.1:1");
        assert_eq!(r.resolve("photos.test", 443), "127.0.0.1:1");
        assert_eq!(r.resolve("photos.test", 80), "photos.test:80");
        assert_eq!(r.resolve("cdn.test:8080", 80), "127.0.0.1:2");
        assert_eq!(r.resolve("[::1]", 80), "[::1]:80");
    }
}
