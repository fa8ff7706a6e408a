//! A deliberately small HTTP/1.1 client for driving the proxy in tests.

use std::io;
use std::net::SocketAddr;
use std::sync::Arc;

use rustls::pki_types::ServerName;
use rustls::ClientConfig;
use tokio::io::{AsyncBufReadExt, AsyncRead, AsyncReadExt, AsyncWrite, AsyncWriteExt, BufReader};
use tokio::net::TcpStream;
use tokio_rustls::client::TlsStream;
use tokio_rustls::TlsConnector;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Response {
    pub status: u16,
    pub headers: Vec<(String, String)>,
    /// Payload with any chunked framing removed.
    pub body: Vec<u8>,
    /// Every byte received for this response.
    pub raw: Vec<u8>,
}

impl Response {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers.iter().find(|(n, _)| n.eq_ignore_ascii_case(name)).map(|(_, v)| v.as_str())
    }
}

/// Serializes a request. A `Content-Length` header is added for non-empty
/// bodies unless `chunk` is set, in which case the body is sent chunked.
pub fn request(method: &str, target: &str, host: &str, headers: &[(&str, &str)], body: &[u8], chunk: Option<usize>) -> Vec<u8> {
    let mut out = format!("{method} {target} HTTP/1.1\r\nHost: {host}\r\n").into_bytes();
    for (n, v) in headers {
        out.extend(format!("{n}: {v}\r\n").bytes());
    }
    match chunk {
        Some(size) => {
            out.extend(b"Transfer-Encoding: chunked\r\n\r\n");
            for piece in body.chunks(size.max(1)) {
                out.extend(format!("{:x}\r\n", piece.len()).bytes());
                out.extend(piece);
                out.extend(b"\r\n");
            }
            out.extend(b"0\r\n\r\n");
        }
        None => {
            if !body.is_empty() || method == "PUT" || method == "POST" {
                out.extend(format!("Content-Length: {}\r\n", body.len()).bytes());
            }
            out.extend(b"\r\n");
            out.extend(body);
        }
    }
    out
}

/// A `multipart/form-data` body of `(name, content type, bytes)` parts.
pub fn multipart(boundary: &str, parts: &[(&str, &str, &[u8])]) -> Vec<u8> {
    let mut out = Vec::new();
    for (name, ty, data) in parts {
        out.extend(format!("--{boundary}\r\nContent-Disposition: form-data; name=\"{name}\"").bytes());
        if ty.starts_with("image/") {
            out.extend(format!("; filename=\"{name}.jpg\"").bytes());
        }
        out.extend(format!("\r\nContent-Type: {ty}\r\n\r\n").bytes());
        out.extend(*data);
        out.extend(b"\r\n");
    }
    out.extend(format!("--{boundary}--\r\n").bytes());
    out
}

async fn read_line<R: tokio::io::AsyncBufRead + Unpin>(r: &mut R, raw: &mut Vec<u8>) -> io::Result<String> {
    let start = raw.len();
    if r.read_until(b'\n', raw).await? == 0 {
        return Err(io::ErrorKind::UnexpectedEof.into());
    }
    Ok(String::from_utf8_lossy(&raw[start..]).trim_end().to_string())
}

/// Reads one response; `head_only` for replies to HEAD.
pub async fn read_response<R: AsyncRead + Unpin>(r: &mut BufReader<R>, head_only: bool) -> io::Result<Response> {
    let mut raw = Vec::new();
    let status_line = read_line(r, &mut raw).await?;
    let status = status_line
        .split(' ')
        .nth(1)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, status_line.clone()))?;
    let mut headers = Vec::new();
    loop {
        let line = read_line(r, &mut raw).await?;
        if line.is_empty() {
            break;
        }
        if let Some((n, v)) = line.split_once(':') {
            headers.push((n.trim().to_string(), v.trim().to_string()));
        }
    }
    let mut resp = Response {
        status,
        headers,
        body: Vec::new(),
        raw,
    };
    if head_only || status == 204 || status == 304 || (100..200).contains(&status) {
        return Ok(resp);
    }
    if resp.header("transfer-encoding").is_some_and(|v| v.eq_ignore_ascii_case("chunked")) {
        loop {
            let line = read_line(r, &mut resp.raw).await?;
            let size = usize::from_str_radix(line.split(';').next().unwrap_or("").trim(), 16)
                .map_err(|_| io::Error::new(io::ErrorKind::InvalidData, "chunk size"))?;
            if size == 0 {
                while !read_line(r, &mut resp.raw).await?.is_empty() {}
                break;
            }
            let mut data = vec![0; size + 2];
            r.read_exact(&mut data).await?;
            resp.raw.extend(&data);
            resp.body.extend(&data[..size]);
        }
    } else if let Some(len) = resp.header("content-length") {
        let n: usize = len.parse().map_err(|_| io::Error::new(io::ErrorKind::InvalidData, "content-length"))?;
        resp.body = vec![0; n];
        r.read_exact(&mut resp.body).await?;
        resp.raw.extend(&resp.body);
    } else {
        r.read_to_end(&mut resp.body).await?;
        resp.raw.extend(&resp.body);
    }
    Ok(resp)
}

/// Sends raw request bytes over `stream` and reads the reply.
pub async fn exchange<S: AsyncRead + AsyncWrite + Unpin>(stream: &mut BufReader<S>, request: &[u8]) -> io::Result<Response> {
    stream.get_mut().write_all(request).await?;
    stream.get_mut().flush().await?;
    let head_only = request.starts_with(b"HEAD ") || request.starts_with(b"CONNECT ");
    read_response(stream, head_only).await
}

/// One request over a fresh plain connection to the proxy.
pub async fn via_proxy(proxy: SocketAddr, request: &[u8]) -> io::Result<Response> {
    let mut conn = BufReader::new(TcpStream::connect(proxy).await?);
    exchange(&mut conn, request).await
}

/// Outcome of asking the proxy for a tunnel.
pub enum Tunnel {
    Open(Box<BufReader<TlsStream<TcpStream>>>),
    Refused(Response),
}

/// Issues `CONNECT authority` and, if accepted, starts TLS for `server_name`.
pub async fn connect_tls(proxy: SocketAddr, authority: &str, server_name: &str, tls: Arc<ClientConfig>) -> io::Result<Tunnel> {
    let mut conn = BufReader::new(TcpStream::connect(proxy).await?);
    let req = format!("CONNECT {authority} HTTP/1.1\r\nHost: {authority}\r\n\r\n");
    let resp = exchange(&mut conn, req.as_bytes()).await?;
    if resp.status != 200 {
        return Ok(Tunnel::Refused(resp));
    }
    let name = ServerName::try_from(server_name.to_string()).map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))?;
    let stream = TlsConnector::from(tls).connect(name, conn.into_inner()).await?;
    Ok(Tunnel::Open(Box::new(BufReader::new(stream))))
}
