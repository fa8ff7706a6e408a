//! A stand-in for a cloud photo service: stores uploads, serves them back,
//! and records every byte it receives and sends.

use std::collections::HashMap;
use std::io;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use rustls::ServerConfig;
use tokio::io::{AsyncBufReadExt, AsyncRead, AsyncReadExt, AsyncWrite, AsyncWriteExt, BufReader};
use tokio::net::TcpListener;
use tokio::task::JoinHandle;
use tokio_rustls::TlsAcceptor;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoredObject {
    /// Exactly the bytes received, after removing any chunked framing.
    pub body: Vec<u8>,
    pub headers: Vec<(String, String)>,
}

impl StoredObject {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers.iter().find(|(n, _)| n.eq_ignore_ascii_case(name)).map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, Default)]
pub struct StubStore {
    objects: Mutex<HashMap<String, StoredObject>>,
    received: Mutex<Vec<Vec<u8>>>,
    sent: Mutex<Vec<Vec<u8>>>,
}

impl StubStore {
    pub fn object(&self, path: &str) -> Option<StoredObject> {
        self.objects.lock().unwrap().get(path).cloned()
    }

    pub fn put(&self, path: &str, object: StoredObject) {
        self.objects.lock().unwrap().insert(path.to_string(), object);
    }

    /// Raw bytes of each request, in arrival order.
    pub fn received(&self) -> Vec<Vec<u8>> {
        self.received.lock().unwrap().clone()
    }

    /// Raw bytes of each response, in order.
    pub fn sent(&self) -> Vec<Vec<u8>> {
        self.sent.lock().unwrap().clone()
    }
}

pub struct StubServer {
    addr: SocketAddr,
    pub store: Arc<StubStore>,
    task: JoinHandle<()>,
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.task.abort();
    }
}

impl StubServer {
    /// Plain HTTP on an ephemeral loopback port.
    pub async fn start() -> io::Result<Self> {
        Self::launch(None).await
    }

    pub async fn start_tls(config: Arc<ServerConfig>) -> io::Result<Self> {
        Self::launch(Some(TlsAcceptor::from(config))).await
    }

    async fn launch(tls: Option<TlsAcceptor>) -> io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0").await?;
        let addr = listener.local_addr()?;
        let store = Arc::new(StubStore::default());
        let shared = store.clone();
        let task = tokio::spawn(async move {
            while let Ok((tcp, _)) = listener.accept().await {
                let store = shared.clone();
                let tls = tls.clone();
                tokio::spawn(async move {
                    let _ = match tls {
                        Some(acceptor) => match acceptor.accept(tcp).await {
                            Ok(s) => serve(s, &store).await,
                            Err(_) => Ok(()),
                        },
                        None => serve(tcp, &store).await,
                    };
                });
            }
        });
        Ok(StubServer { addr, store, task })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }
}

struct Request {
    method: String,
    path: String,
    query: String,
    headers: Vec<(String, String)>,
    body: Vec<u8>,
}

impl Request {
    fn header(&self, name: &str) -> Option<&str> {
        self.headers.iter().find(|(n, _)| n.eq_ignore_ascii_case(name)).map(|(_, v)| v.as_str())
    }
}

async fn line<R: AsyncRead + Unpin>(r: &mut BufReader<R>, raw: &mut Vec<u8>) -> io::Result<Option<String>> {
    let start = raw.len();
    if r.read_until(b'\n', raw).await? == 0 {
        return Ok(None);
    }
    Ok(Some(String::from_utf8_lossy(&raw[start..]).trim_end().to_string()))
}

async fn read_request<R: AsyncRead + Unpin>(r: &mut BufReader<R>, raw: &mut Vec<u8>) -> io::Result<Option<Request>> {
    let Some(first) = line(r, raw).await? else { return Ok(None) };
    let mut parts = first.split(' ');
    let method = parts.next().unwrap_or_default().to_string();
    let mut target = parts.next().unwrap_or_default().to_string();
    // Accept absolute-form targets as forwarded by a proxy.
    if let Some(rest) = target.strip_prefix("http://").or_else(|| target.strip_prefix("https://")) {
        target = rest.find('/').map_or("/".to_string(), |i| rest[i..].to_string());
    }
    let (path, query) = match target.split_once('?') {
        Some((p, q)) => (p.to_string(), q.to_string()),
        None => (target, String::new()),
    };
    let mut headers = Vec::new();
    loop {
        let l = line(r, raw).await?.ok_or(io::ErrorKind::UnexpectedEof)?;
        if l.is_empty() {
            break;
        }
        if let Some((n, v)) = l.split_once(':') {
            headers.push((n.trim().to_string(), v.trim().to_string()));
        }
    }
    let mut req = Request {
        method,
        path,
        query,
        headers,
        body: Vec::new(),
    };
    if req.header("transfer-encoding").is_some_and(|v| v.eq_ignore_ascii_case("chunked")) {
        loop {
            let l = line(r, raw).await?.ok_or(io::ErrorKind::UnexpectedEof)?;
            let size = usize::from_str_radix(l.split(';').next().unwrap_or("").trim(), 16)
                .map_err(|_| io::Error::new(io::ErrorKind::InvalidData, "chunk size"))?;
            if size == 0 {
                while !line(r, raw).await?.ok_or(io::ErrorKind::UnexpectedEof)?.is_empty() {}
                break;
            }
            let mut data = vec![0; size + 2];
            r.read_exact(&mut data).await?;
            raw.extend(&data);
            req.body.extend(&data[..size]);
        }
    } else if let Some(n) = req.header("content-length").and_then(|v| v.parse::<usize>().ok()) {
        req.body = vec![0; n];
        r.read_exact(&mut req.body).await?;
        raw.extend(&req.body);
    }
    Ok(Some(req))
}

/// Parts of a multipart body as (name, content type, data).
fn form_parts(body: &[u8], content_type: &str) -> Vec<(String, String, Vec<u8>)> {
    let Some(boundary) = content_type.split("boundary=").nth(1).map(|b| b.split(';').next().unwrap_or("").trim_matches('"')) else {
        return Vec::new();
    };
    let delim = format!("--{boundary}").into_bytes();
    let mut marks = Vec::new();
    let mut i = 0;
    while i + delim.len() <= body.len() {
        if body[i..].starts_with(&delim) {
            marks.push(i);
            i += delim.len();
        } else {
            i += 1;
        }
    }
    let mut parts = Vec::new();
    for pair in marks.windows(2) {
        let section = &body[pair[0] + delim.len()..pair[1]];
        let Some(split) = section.windows(4).position(|w| w == b"\r\n\r\n") else { continue };
        let head = String::from_utf8_lossy(&section[..split]);
        let data = section[split + 4..].strip_suffix(b"\r\n").unwrap_or(&section[split + 4..]);
        let mut name = String::new();
        let mut ty = String::new();
        for l in head.lines() {
            let lower = l.to_ascii_lowercase();
            if lower.starts_with("content-disposition:") {
                if let Some(n) = l.split("name=\"").nth(1) {
                    name = n.split('"').next().unwrap_or("").to_string();
                }
            } else if let Some(v) = lower.strip_prefix("content-type:") {
                ty = v.trim().to_string();
            }
        }
        parts.push((name, ty, data.to_vec()));
    }
    parts
}

async fn serve<S: AsyncRead + AsyncWrite + Unpin>(stream: S, store: &StubStore) -> io::Result<()> {
    let mut conn = BufReader::new(stream);
    loop {
        let mut raw = Vec::new();
        let Some(req) = read_request(&mut conn, &mut raw).await? else { return Ok(()) };
        store.received.lock().unwrap().push(raw);
        let mut extra = Vec::new();
        let (status, body) = match req.method.as_str() {
            "PUT" | "POST" => {
                let ct = req.header("content-type").unwrap_or("").to_string();
                if ct.to_ascii_lowercase().starts_with("multipart/") {
                    for (name, ty, data) in form_parts(&req.body, &ct) {
                        store.put(&format!("{}/{name}", req.path), StoredObject {
                            body: data,
                            headers: vec![("Content-Type".into(), ty)],
                        });
                    }
                }
                store.put(&req.path, StoredObject {
                    body: req.body.clone(),
                    headers: req.headers.clone(),
                });
                ("201 Created", Vec::new())
            }
            "GET" | "HEAD" => match store.object(&req.path) {
                Some(obj) => {
                    if let Some(ct) = obj.header("content-type") {
                        extra.push(format!("Content-Type: {ct}"));
                    }
                    ("200 OK", obj.body)
                }
                None => ("404 Not Found", Vec::new()),
            },
            _ => ("405 Method Not Allowed", Vec::new()),
        };
        let chunk = req.query.split('&').find_map(|kv| kv.strip_prefix("chunked=")).and_then(|v| v.parse::<usize>().ok());
        let mut out = format!("HTTP/1.1 {status}\r\n").into_bytes();
        for h in &extra {
            out.extend(format!("{h}\r\n").bytes());
        }
        match chunk {
            Some(size) if req.method == "GET" => {
                out.extend(b"Transfer-Encoding: chunked\r\n\r\n");
                for piece in body.chunks(size.max(1)) {
                    out.extend(format!("{:x}\r\n", piece.len()).bytes());
                    out.extend(piece);
                    out.extend(b"\r\n");
                }
                out.extend(b"0\r\n\r\n");
            }
            _ => {
                out.extend(format!("Content-Length: {}\r\n\r\n", body.len()).bytes());
                if req.method != "HEAD" {
                    out.extend(&body);
                }
            }
        }
        conn.get_mut().write_all(&out).await?;
        conn.get_mut().flush().await?;
        store.sent.lock().unwrap().push(out);
        if req.header("connection").is_some_and(|v| v.eq_ignore_ascii_case("close")) {
            conn.get_mut().shutdown().await.ok();
            return Ok(());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::client::{exchange, multipart, request};
    use tokio::net::TcpStream;

    #[tokio::test]
    async fn put_then_get_echoes_bytes() {
        let stub = StubServer::start().await.unwrap();
        let mut conn = BufReader::new(TcpStream::connect(stub.addr()).await.unwrap());
        let body: Vec<u8> = (0..=255).collect();
        let put = request("PUT", "/a.jpg", "x", &[("Content-Type", "image/jpeg")], &body, None);
        assert_eq!(exchange(&mut conn, &put).await.unwrap().status, 201);
        let got = exchange(&mut conn, &request("GET", "/a.jpg", "x", &[], &[], None)).await.unwrap();
        assert_eq!(got.body, body);
        assert_eq!(got.header("content-type"), Some("image/jpeg"));
        let chunked = exchange(&mut conn, &request("GET", "/a.jpg?chunked=7", "x", &[], &[], None)).await.unwrap();
        assert_eq!(chunked.body, body);
        assert_eq!(stub.store.received()[0], put);
    }

    #[tokio::test]
    async fn multipart_parts_are_stored_by_name() {
        let stub = StubServer::start().await.unwrap();
        let mut conn = BufReader::new(TcpStream::connect(stub.addr()).await.unwrap());
        let form = multipart("zz", &[("title", "text/plain", b"hi"), ("photo", "image/jpeg", &[0xFF, 0xD8, 0xFF, 0xD9])]);
        let post = request("POST", "http://x/up", "x", &[("Content-Type", "multipart/form-data; boundary=zz")], &form, Some(5));
        assert_eq!(exchange(&mut conn, &post).await.unwrap().status, 201);
        assert_eq!(stub.store.object("/up/photo").unwrap().body, [0xFF, 0xD8, 0xFF, 0xD9]);
        assert_eq!(stub.store.object("/up/title").unwrap().body, b"hi");
        assert_eq!(stub.store.object("/up").unwrap().body, form);
    }
}
