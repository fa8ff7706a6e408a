//! Applying the cipher to the JPEG payloads of HTTP messages.

use jpegveil_core::{encrypt_jpeg, ByteClass, CipherConfig};

use crate::detect::detect_jpeg_spans;
use crate::http::{Body, Head};
use crate::rules::{Direction, RuleSet};

/// What happened to one message body.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RewriteReport {
    /// JPEG spans found in the body.
    pub spans: usize,
    /// Spans successfully transformed.
    pub rewritten: usize,
    /// Entropy bytes that carried encrypted bits, over all spans.
    pub bytes_encrypted: u64,
    /// Reason codes for everything left untouched.
    pub skipped: Vec<String>,
}

impl RewriteReport {
    fn skip(reason: impl Into<String>) -> Self {
        RewriteReport {
            skipped: vec![reason.into()],
            ..Default::default()
        }
    }

    pub fn skip_reason(&self) -> Option<String> {
        (!self.skipped.is_empty()).then(|| self.skipped.join(","))
    }
}

/// Encrypts (or decrypts; the two are the same operation) every JPEG span
/// of `payload` in place. Anything that fails to parse is left as it was.
pub fn rewrite_payload(
    payload: &mut [u8],
    content_type: &str,
    identity_encoded: bool,
    config: &CipherConfig,
) -> RewriteReport {
    if !identity_encoded {
        return RewriteReport::skip("content-encoding");
    }
    let spans = match detect_jpeg_spans(payload, content_type) {
        Ok(spans) => spans,
        Err(e) => return RewriteReport::skip(e.code()),
    };
    let mut report = RewriteReport {
        spans: spans.len(),
        ..Default::default()
    };
    for span in spans {
        let part = &mut payload[span.range()];
        match encrypt_jpeg(part, config) {
            Ok(out) => {
                part.copy_from_slice(&out.bytes);
                report.rewritten += 1;
                report.bytes_encrypted += out.report.class_histogram.get(ByteClass::Eligible);
            }
            Err(e) => report.skipped.push(e.code().to_string()),
        }
    }
    report
}

/// Rewrites a buffered body, logging the outcome.
pub fn rewrite_body(head: &Head, body: &mut Body, config: &CipherConfig, host: &str, direction: Direction) -> RewriteReport {
    let mut payload = body.payload();
    let report = rewrite_payload(&mut payload, head.content_type(), head.identity_encoded(), config);
    if report.rewritten > 0 {
        body.set_payload(&payload);
    }
    log(host, direction, &report);
    report
}

pub fn log(host: &str, direction: Direction, report: &RewriteReport) {
    match report.skip_reason() {
        Some(reason) => tracing::warn!(
            host,
            %direction,
            spans = report.spans,
            rewritten = report.rewritten,
            bytes_encrypted = report.bytes_encrypted,
            skip = %reason,
            "jpeg payload passed through"
        ),
        None => tracing::info!(
            host,
            %direction,
            spans = report.spans,
            rewritten = report.rewritten,
            bytes_encrypted = report.bytes_encrypted,
            "jpeg payload rewritten"
        ),
    }
}

/// A complete, buffered HTTP message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub head: Head,
    pub body: Body,
}

impl Message {
    pub fn to_bytes(&self) -> Vec<u8> {
        [self.head.raw.as_slice(), &self.body.raw].concat()
    }
}

fn handle(mut msg: Message, authority: &str, rules: &RuleSet, direction: Direction) -> (Message, Option<RewriteReport>) {
    let report = rules
        .config_for(authority, direction)
        .map(|cfg| rewrite_body(&msg.head, &mut msg.body, cfg, authority, direction));
    (msg, report)
}

/// Request side: encrypts JPEG uploads to hosts with an upload rule. The
/// head, `Content-Length` included, is never touched.
pub fn handle_request(msg: Message, authority: &str, rules: &RuleSet) -> (Message, Option<RewriteReport>) {
    handle(msg, authority, rules, Direction::EncryptUploads)
}

/// Response side: decrypts JPEG downloads from hosts with a download rule.
pub fn handle_response(msg: Message, authority: &str, rules: &RuleSet) -> (Message, Option<RewriteReport>) {
    handle(msg, authority, rules, Direction::DecryptDownloads)
}
