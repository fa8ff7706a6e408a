//! Locating JPEG payloads inside HTTP message bodies.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Container {
    WholeBody,
    MultipartPart,
}

/// A byte range of a body that starts with SOI and ends with EOI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JpegSpan {
    pub start: usize,
    pub length: usize,
    pub container: Container,
}

impl JpegSpan {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.length
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DetectError {
    #[error("multipart body has no boundary parameter")]
    MissingBoundary,
    #[error("multipart boundary never terminates")]
    MalformedMultipart,
}

impl DetectError {
    pub fn code(&self) -> &'static str {
        match self {
            DetectError::MissingBoundary => "missing-boundary",
            DetectError::MalformedMultipart => "malformed-multipart",
        }
    }
}

const SOI: [u8; 2] = [0xFF, 0xD8];

fn media_type(content_type: &str) -> String {
    content_type.split(';').next().unwrap_or("").trim().to_ascii_lowercase()
}

pub fn is_jpeg_type(content_type: &str) -> bool {
    matches!(media_type(content_type).as_str(), "image/jpeg" | "image/jpg" | "image/pjpeg")
}

pub fn is_multipart(content_type: &str) -> bool {
    media_type(content_type).starts_with("multipart/")
}

/// Whether a body with this type could hold a JPEG worth buffering.
pub fn is_candidate(content_type: &str) -> bool {
    is_jpeg_type(content_type) || is_multipart(content_type)
}

fn boundary(content_type: &str) -> Option<String> {
    content_type.split(';').skip(1).find_map(|param| {
        let (name, value) = param.split_once('=')?;
        name.trim()
            .eq_ignore_ascii_case("boundary")
            .then(|| value.trim().trim_matches('"').to_string())
    })
}

fn find(haystack: &[u8], needle: &[u8], from: usize) -> Option<usize> {
    if from > haystack.len() {
        return None;
    }
    haystack[from..].windows(needle.len()).position(|w| w == needle).map(|p| p + from)
}

/// SOI at `start` through the last EOI before `end`.
fn span_in(body: &[u8], start: usize, end: usize, container: Container) -> Option<JpegSpan> {
    if !body[start..end].starts_with(&SOI) {
        return None;
    }
    let eoi = body[start + 2..end].windows(2).rposition(|w| w == [0xFF, 0xD9])?;
    Some(JpegSpan {
        start,
        length: eoi + 4,
        container,
    })
}

/// Finds the JPEG payloads of a body given its `Content-Type`.
///
/// A JPEG-typed body yields one span; a multipart body yields one per part
/// that starts with SOI or declares a JPEG type (and still starts with SOI).
/// Nothing else is scanned.
pub fn detect_jpeg_spans(body: &[u8], content_type: &str) -> Result<Vec<JpegSpan>, DetectError> {
    if is_jpeg_type(content_type) {
        return Ok(span_in(body, 0, body.len(), Container::WholeBody).into_iter().collect());
    }
    if !is_multipart(content_type) {
        return Ok(Vec::new());
    }
    let b = boundary(content_type).ok_or(DetectError::MissingBoundary)?;
    let delim = format!("--{b}").into_bytes();
    let inner = format!("\r\n--{b}").into_bytes();

    // The first delimiter may open the body or follow a preamble.
    let mut pos = if body.starts_with(&delim) {
        0
    } else {
        find(body, &inner, 0).ok_or(DetectError::MalformedMultipart)? + 2
    };
    let mut spans = Vec::new();
    loop {
        let after = pos + delim.len();
        match body.get(after..after + 2) {
            Some(b"--") => return Ok(spans),
            None => return Err(DetectError::MalformedMultipart),
            _ => {}
        }
        let headers_end = find(body, b"\r\n\r\n", after).ok_or(DetectError::MalformedMultipart)?;
        let content = headers_end + 4;
        let next = find(body, &inner, headers_end).ok_or(DetectError::MalformedMultipart)?;
        let content_end = next.max(content);
        if let Some(span) = span_in(body, content, content_end, Container::MultipartPart) {
            spans.push(span);
        }
        pos = next + 2;
    }
}
