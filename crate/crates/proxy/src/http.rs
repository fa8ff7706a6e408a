//! HTTP/1.1 message framing, just enough to relay bodies byte-for-byte.

use std::io;
use std::ops::Range;

use tokio::io::{AsyncBufRead, AsyncBufReadExt, AsyncRead, AsyncReadExt, AsyncWrite, AsyncWriteExt};

const MAX_HEAD: usize = 64 * 1024;
const MAX_HEADERS: usize = 128;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StartLine {
    Request { method: String, target: String },
    Response { status: u16 },
}

/// A parsed message head together with its exact bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Head {
    pub raw: Vec<u8>,
    pub start: StartLine,
    pub headers: Vec<(String, Vec<u8>)>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HttpError {
    #[error("malformed message head: {0}")]
    BadHead(String),
    #[error("message head exceeds {MAX_HEAD} bytes")]
    HeadTooLarge,
    #[error("invalid Content-Length")]
    BadLength,
    #[error("unsupported Transfer-Encoding {0:?}")]
    BadTransferEncoding(String),
    #[error("malformed chunked body")]
    BadChunk,
}

impl From<HttpError> for io::Error {
    fn from(e: HttpError) -> Self {
        io::Error::new(io::ErrorKind::InvalidData, e)
    }
}

impl Head {
    pub fn parse(raw: Vec<u8>, request: bool) -> Result<Head, HttpError> {
        let mut slots = [httparse::EMPTY_HEADER; MAX_HEADERS];
        let bad = |e: httparse::Error| HttpError::BadHead(e.to_string());
        let (start, parsed) = if request {
            let mut req = httparse::Request::new(&mut slots);
            if req.parse(&raw).map_err(bad)?.is_partial() {
                return Err(HttpError::BadHead("incomplete".into()));
            }
            let start = StartLine::Request {
                method: req.method.unwrap_or_default().to_string(),
                target: req.path.unwrap_or_default().to_string(),
            };
            (start, req.headers.to_vec())
        } else {
            let mut res = httparse::Response::new(&mut slots);
            if res.parse(&raw).map_err(bad)?.is_partial() {
                return Err(HttpError::BadHead("incomplete".into()));
            }
            (StartLine::Response { status: res.code.unwrap_or(0) }, res.headers.to_vec())
        };
        let headers = parsed.iter().map(|h| (h.name.to_string(), h.value.to_vec())).collect();
        Ok(Head { raw, start, headers })
    }

    /// Value of the last header named `name`, if it is valid UTF-8.
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .rev()
            .find(|(n, _)| n.eq_ignore_ascii_case(name))
            .and_then(|(_, v)| std::str::from_utf8(v).ok())
            .map(str::trim)
    }

    fn header_values<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.headers
            .iter()
            .filter(move |(n, _)| n.eq_ignore_ascii_case(name))
            .filter_map(|(_, v)| std::str::from_utf8(v).ok())
            .flat_map(|v| v.split(','))
            .map(str::trim)
            .filter(|v| !v.is_empty())
    }

    pub fn method(&self) -> Option<&str> {
        match &self.start {
            StartLine::Request { method, .. } => Some(method),
            StartLine::Response { .. } => None,
        }
    }

    pub fn target(&self) -> Option<&str> {
        match &self.start {
            StartLine::Request { target, .. } => Some(target),
            StartLine::Response { .. } => None,
        }
    }

    pub fn status(&self) -> Option<u16> {
        match self.start {
            StartLine::Response { status } => Some(status),
            StartLine::Request { .. } => None,
        }
    }

    pub fn content_type(&self) -> &str {
        self.header("content-type").unwrap_or("")
    }

    /// True when the body carries no content coding beyond identity.
    pub fn identity_encoded(&self) -> bool {
        self.header_values("content-encoding").all(|v| v.eq_ignore_ascii_case("identity"))
    }

    pub fn wants_close(&self) -> bool {
        self.header_values("connection").any(|v| v.eq_ignore_ascii_case("close"))
    }

    fn framing(&self) -> Result<Option<Framing>, HttpError> {
        let codings: Vec<&str> = self.header_values("transfer-encoding").collect();
        if let Some(last) = codings.last() {
            return if codings.len() == 1 && last.eq_ignore_ascii_case("chunked") {
                Ok(Some(Framing::Chunked))
            } else {
                Err(HttpError::BadTransferEncoding(codings.join(", ")))
            };
        }
        let mut lengths = self.header_values("content-length");
        match lengths.next() {
            None => Ok(None),
            Some(first) => {
                let n: u64 = first.parse().map_err(|_| HttpError::BadLength)?;
                if lengths.any(|other| other != first) {
                    return Err(HttpError::BadLength);
                }
                Ok(Some(Framing::Length(n)))
            }
        }
    }

    pub fn request_framing(&self) -> Result<Framing, HttpError> {
        Ok(self.framing()?.unwrap_or(Framing::Length(0)))
    }

    pub fn response_framing(&self, request_method: &str) -> Result<Framing, HttpError> {
        let status = self.status().unwrap_or(0);
        if request_method.eq_ignore_ascii_case("HEAD") || (100..200).contains(&status) || status == 204 || status == 304 {
            return Ok(Framing::Length(0));
        }
        Ok(self.framing()?.unwrap_or(Framing::UntilClose))
    }
}

/// How the end of a body is found.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Framing {
    Length(u64),
    Chunked,
    UntilClose,
}

/// Raw body bytes as they appear on the wire, plus where the payload lives
/// inside them. For chunked bodies the payload is scattered between chunk
/// size lines; rewriting it in place keeps the framing untouched.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Body {
    pub raw: Vec<u8>,
    pub data: Vec<Range<usize>>,
}

impl Body {
    pub fn plain(bytes: Vec<u8>) -> Body {
        let data = if bytes.is_empty() { Vec::new() } else { std::iter::once(0..bytes.len()).collect() };
        Body { raw: bytes, data }
    }

    pub fn payload_len(&self) -> usize {
        self.data.iter().map(|r| r.len()).sum()
    }

    pub fn payload(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.payload_len());
        for r in &self.data {
            out.extend_from_slice(&self.raw[r.clone()]);
        }
        out
    }

    /// Writes an equally long payload back over the data ranges.
    pub fn set_payload(&mut self, payload: &[u8]) {
        assert_eq!(payload.len(), self.payload_len(), "payload length must not change");
        let mut at = 0;
        for r in &self.data {
            self.raw[r.clone()].copy_from_slice(&payload[at..at + r.len()]);
            at += r.len();
        }
    }
}

/// Reads one message head. Returns `None` on a clean end of stream before
/// the first byte.
pub async fn read_head<R: AsyncBufRead + Unpin>(r: &mut R, request: bool) -> io::Result<Option<Head>> {
    let mut raw = Vec::new();
    loop {
        let before = raw.len();
        let n = r.read_until(b'\n', &mut raw).await?;
        if n == 0 {
            return if raw.is_empty() {
                Ok(None)
            } else {
                Err(io::ErrorKind::UnexpectedEof.into())
            };
        }
        if raw.len() > MAX_HEAD {
            return Err(HttpError::HeadTooLarge.into());
        }
        let line = &raw[before..];
        // Tolerate blank lines ahead of a request line.
        if before == 0 && (line == b"\r\n" || line == b"\n") {
            raw.clear();
            continue;
        }
        if line == b"\r\n" || line == b"\n" {
            return Ok(Some(Head::parse(raw, request)?));
        }
    }
}

async fn read_line<R: AsyncBufRead + Unpin>(r: &mut R, out: &mut Vec<u8>) -> io::Result<usize> {
    let start = out.len();
    let n = r.read_until(b'\n', out).await?;
    if n == 0 || !out.ends_with(b"\n") {
        return Err(io::ErrorKind::UnexpectedEof.into());
    }
    if out.len() - start > MAX_HEAD {
        return Err(HttpError::BadChunk.into());
    }
    Ok(start)
}

fn chunk_size(line: &[u8]) -> Result<u64, HttpError> {
    let text = std::str::from_utf8(line).map_err(|_| HttpError::BadChunk)?;
    let hex = text.split(';').next().unwrap_or("").trim();
    if hex.is_empty() || hex.len() > 15 {
        return Err(HttpError::BadChunk);
    }
    u64::from_str_radix(hex, 16).map_err(|_| HttpError::BadChunk)
}

/// Either gathers the body for rewriting or streams it straight through.
struct Sink<'a, W> {
    out: &'a mut W,
    body: Body,
    buffering: bool,
    cap: usize,
}

impl<W: AsyncWrite + Unpin> Sink<'_, W> {
    async fn push_framing(&mut self, bytes: &[u8]) -> io::Result<()> {
        if self.buffering {
            self.body.raw.extend_from_slice(bytes);
            self.spill().await
        } else {
            self.out.write_all(bytes).await
        }
    }

    async fn push_data<R: AsyncRead + Unpin>(&mut self, r: &mut R, n: u64) -> io::Result<()> {
        if self.buffering && self.body.raw.len() as u64 + n <= self.cap as u64 {
            let start = self.body.raw.len();
            self.body.raw.resize(start + n as usize, 0);
            r.read_exact(&mut self.body.raw[start..]).await?;
            if n > 0 {
                self.body.data.push(start..start + n as usize);
            }
            return Ok(());
        }
        self.stop_buffering().await?;
        let copied = tokio::io::copy(&mut (&mut *r).take(n), &mut *self.out).await?;
        if copied < n {
            return Err(io::ErrorKind::UnexpectedEof.into());
        }
        Ok(())
    }

    async fn spill(&mut self) -> io::Result<()> {
        if self.body.raw.len() > self.cap {
            self.stop_buffering().await?;
        }
        Ok(())
    }

    async fn stop_buffering(&mut self) -> io::Result<()> {
        if self.buffering {
            self.buffering = false;
            self.out.write_all(&self.body.raw).await?;
            self.body = Body::default();
        }
        Ok(())
    }
}

/// What became of a relayed body.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relayed {
    /// Buffered in full and handed to the rewriter.
    Rewritten,
    /// Streamed without inspection, either by request or because it was
    /// larger than the cap.
    Streamed { over_cap: bool },
}

/// Copies one body from `r` to `w`. When `rewrite` is given and the raw body
/// fits in `cap` bytes, the whole body is buffered, passed to `rewrite`, and
/// then written out; otherwise bytes flow through unchanged.
pub async fn relay_body<R, W, F>(
    r: &mut R,
    w: &mut W,
    framing: Framing,
    cap: usize,
    rewrite: Option<F>,
) -> io::Result<Relayed>
where
    R: AsyncBufRead + Unpin,
    W: AsyncWrite + Unpin,
    F: FnOnce(&mut Body),
{
    let wanted = rewrite.is_some();
    let mut sink = Sink {
        out: w,
        body: Body::default(),
        buffering: wanted,
        cap,
    };
    match framing {
        Framing::Length(n) => sink.push_data(r, n).await?,
        Framing::Chunked => {
            let mut line = Vec::new();
            loop {
                line.clear();
                read_line(r, &mut line).await?;
                let size = chunk_size(&line)?;
                sink.push_framing(&line).await?;
                if size == 0 {
                    // Trailer section up to the final empty line.
                    loop {
                        line.clear();
                        read_line(r, &mut line).await?;
                        sink.push_framing(&line).await?;
                        if line == b"\r\n" || line == b"\n" {
                            break;
                        }
                    }
                    break;
                }
                sink.push_data(r, size).await?;
                line.clear();
                read_line(r, &mut line).await?;
                if line != b"\r\n" && line != b"\n" {
                    return Err(HttpError::BadChunk.into());
                }
                sink.push_framing(&line).await?;
            }
        }
        Framing::UntilClose => {
            if sink.buffering {
                let mut buf = Vec::new();
                (&mut *r).take(cap as u64 + 1).read_to_end(&mut buf).await?;
                sink.body = Body::plain(buf);
                sink.spill().await?;
            }
            if !sink.buffering {
                tokio::io::copy(r, sink.out).await?;
            }
        }
    }
    let outcome = if sink.buffering {
        if let Some(f) = rewrite {
            f(&mut sink.body);
        }
        sink.out.write_all(&sink.body.raw).await?;
        Relayed::Rewritten
    } else {
        Relayed::Streamed { over_cap: wanted }
    };
    sink.out.flush().await?;
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tokio::io::BufReader;

    async fn relay(input: &[u8], framing: Framing, cap: usize, flip: bool) -> (Vec<u8>, Relayed, Vec<u8>) {
        let mut r = BufReader::new(input);
        let mut out = Vec::new();
        let mut seen = Vec::new();
        let rewrite = flip.then_some(|b: &mut Body| {
            seen = b.payload();
            let inverted: Vec<u8> = seen.iter().map(|x| !x).collect();
            b.set_payload(&inverted);
        });
        let how = relay_body(&mut r, &mut out, framing, cap, rewrite).await.unwrap();
        (out, how, seen)
    }

    #[tokio::test]
    async fn chunked_payload_is_rewritten_in_place() {
        let wire = b"3;ext=1\r\nabc\r\n2\r\nde\r\n0\r\nX-Trailer: y\r\n\r\nNEXT";
        let (out, how, seen) = relay(wire, Framing::Chunked, 1024, true).await;
        assert_eq!(how, Relayed::Rewritten);
        assert_eq!(seen, b"abcde");
        assert_eq!(out.len(), wire.len() - 4);
        let expect: Vec<u8> = [&b"3;ext=1\r\n"[..], &[!b'a', !b'b', !b'c'], b"\r\n2\r\n", &[!b'd', !b'e'], b"\r\n0\r\nX-Trailer: y\r\n\r\n"].concat();
        assert_eq!(out, expect);
    }

    #[tokio::test]
    async fn oversized_bodies_stream_through() {
        let wire = b"5\r\nhello\r\n5\r\nworld\r\n0\r\n\r\n";
        let (out, how, seen) = relay(wire, Framing::Chunked, 8, true).await;
        assert_eq!(how, Relayed::Streamed { over_cap: true });
        assert!(seen.is_empty());
        assert_eq!(out, wire);

        let (out, how, _) = relay(b"0123456789", Framing::Length(10), 4, true).await;
        assert_eq!((out.as_slice(), how), (&b"0123456789"[..], Relayed::Streamed { over_cap: true }));
        let (out, how, _) = relay(b"0123456789", Framing::UntilClose, 4, true).await;
        assert_eq!((out.as_slice(), how), (&b"0123456789"[..], Relayed::Streamed { over_cap: true }));
    }

    #[tokio::test]
    async fn fixed_and_until_close() {
        let (out, how, seen) = relay(b"abcdEXTRA", Framing::Length(4), 64, true).await;
        assert_eq!((how, seen.as_slice()), (Relayed::Rewritten, &b"abcd"[..]));
        assert_eq!(out, [!b'a', !b'b', !b'c', !b'd']);
        let (out, how, _) = relay(b"abcd", Framing::UntilClose, 64, false).await;
        assert_eq!((out.as_slice(), how), (&b"abcd"[..], Relayed::Streamed { over_cap: false }));
    }

    #[tokio::test]
    async fn truncated_bodies_fail() {
        let mut out = Vec::new();
        let none: Option<fn(&mut Body)> = None;
        let err = relay_body(&mut BufReader::new(&b"ab"[..]), &mut out, Framing::Length(4), 64, none).await;
        assert!(err.is_err());
        let err = relay_body(&mut BufReader::new(&b"zz\r\n"[..]), &mut out, Framing::Chunked, 64, none).await;
        assert!(err.is_err());
    }

    #[tokio::test]
    async fn heads_and_framing() {
        let mut r = BufReader::new(&b"\r\nPOST http://h/x HTTP/1.1\r\nHost: h\r\nContent-Length: 3\r\nContent-Type: image/jpeg\r\n\r\nabc"[..]);
        let head = read_head(&mut r, true).await.unwrap().unwrap();
        assert_eq!(head.method(), Some("POST"));
        assert_eq!(head.target(), Some("http://h/x"));
        assert_eq!(head.request_framing().unwrap(), Framing::Length(3));
        assert!(head.raw.starts_with(b"POST"));
        assert!(read_head(&mut BufReader::new(&b""[..]), true).await.unwrap().is_none());

        let res = Head::parse(b"HTTP/1.1 200 OK\r\nContent-Encoding: gzip\r\n\r\n".to_vec(), false).unwrap();
        assert!(!res.identity_encoded());
        assert_eq!(res.response_framing("GET").unwrap(), Framing::UntilClose);
        assert_eq!(res.response_framing("HEAD").unwrap(), Framing::Length(0));
        let conflicting = Head::parse(b"PUT / HTTP/1.1\r\nContent-Length: 3\r\nContent-Length: 4\r\n\r\n".to_vec(), true).unwrap();
        assert_eq!(conflicting.request_framing(), Err(HttpError::BadLength));
    }
}
