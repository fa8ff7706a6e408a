//! Which hosts get their JPEG traffic rewritten, and in which direction.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use jpegveil_core::CipherConfig;
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Encrypt JPEG bodies of requests sent to the host.
    EncryptUploads,
    /// Decrypt JPEG bodies of responses coming back from the host.
    DecryptDownloads,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::EncryptUploads => "upload",
            Direction::DecryptDownloads => "download",
        })
    }
}

/// An exact hostname, or `*.suffix` matching any name below `suffix`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HostPattern {
    Exact(String),
    Suffix(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid host pattern {0:?}")]
pub struct InvalidPattern(pub String);

impl FromStr for HostPattern {
    type Err = InvalidPattern;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        let bad = |name: &str| name.is_empty() || name.contains(['*', '/', ' ', ':']);
        match lower.strip_prefix("*.") {
            Some(rest) if !bad(rest) => Ok(HostPattern::Suffix(rest.to_string())),
            None if !bad(&lower) => Ok(HostPattern::Exact(lower)),
            _ => Err(InvalidPattern(s.to_string())),
        }
    }
}

impl HostPattern {
    /// Matches a request authority (`host`, `host:port` or `[v6]:port`).
    pub fn matches(&self, authority: &str) -> bool {
        let host = host_of(authority).to_ascii_lowercase();
        match self {
            HostPattern::Exact(h) => host == *h,
            HostPattern::Suffix(s) => host
                .strip_suffix(s.as_str())
                .is_some_and(|head| head.ends_with('.') && head.len() > 1),
        }
    }
}

/// Host part of an authority, without port or IPv6 brackets.
pub fn host_of(authority: &str) -> &str {
    let a = authority.rsplit_once('@').map_or(authority, |(_, a)| a);
    if let Some(rest) = a.strip_prefix('[') {
        return rest.split(']').next().unwrap_or(rest);
    }
    match a.rsplit_once(':') {
        Some((h, port)) if port.bytes().all(|b| b.is_ascii_digit()) => h,
        _ => a,
    }
}

#[derive(Debug, Clone)]
pub struct ProxyRule {
    pub pattern: HostPattern,
    pub directions: Vec<Direction>,
    pub config: Arc<CipherConfig>,
}

/// Rules in priority order; the first whose pattern matches decides.
#[derive(Debug, Clone, Default)]
pub struct RuleSet {
    rules: Vec<ProxyRule>,
}

impl RuleSet {
    pub fn new(rules: Vec<ProxyRule>) -> Self {
        RuleSet { rules }
    }

    pub fn rule_for(&self, authority: &str) -> Option<&ProxyRule> {
        self.rules.iter().find(|r| r.pattern.matches(authority))
    }

    /// Cipher settings to apply to traffic of `authority` in `direction`.
    pub fn config_for(&self, authority: &str, direction: Direction) -> Option<&CipherConfig> {
        self.rule_for(authority)
            .filter(|r| r.directions.contains(&direction))
            .map(|r| r.config.as_ref())
    }

    /// Whether TLS to this host should be intercepted at all.
    pub fn intercepts(&self, authority: &str) -> bool {
        self.rule_for(authority).is_some_and(|r| !r.directions.is_empty())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use jpegveil_core::Components;

    fn rule(p: &str, directions: Vec<Direction>) -> ProxyRule {
        ProxyRule {
            pattern: p.parse().unwrap(),
            directions,
            config: Arc::new(CipherConfig::new(vec![1; 16], Components::Both).unwrap()),
        }
    }

    #[test]
    fn patterns() {
        let exact: HostPattern = "Photos.Example".parse().unwrap();
        assert!(exact.matches("photos.example"));
        assert!(exact.matches("PHOTOS.example:443"));
        assert!(!exact.matches("up.photos.example"));

        let wild: HostPattern = "*.example".parse().unwrap();
        assert!(wild.matches("a.example:80"));
        assert!(wild.matches("a.b.example"));
        assert!(!wild.matches("example"));
        assert!(!wild.matches("badexample"));

        for bad in ["", "*.", "a*b", "*", "host:80"] {
            assert!(bad.parse::<HostPattern>().is_err(), "{bad}");
        }
    }

    #[test]
    fn authority_hosts() {
        assert_eq!(host_of("h:8080"), "h");
        assert_eq!(host_of("[::1]:443"), "::1");
        assert_eq!(host_of("user@h"), "h");
        assert_eq!(host_of("h"), "h");
    }

    #[test]
    fn first_matching_rule_decides() {
        let rules = RuleSet::new(vec![
            rule("up.example", vec![Direction::EncryptUploads]),
            rule("*.example", vec![Direction::EncryptUploads, Direction::DecryptDownloads]),
        ]);
        assert!(rules.config_for("up.example", Direction::EncryptUploads).is_some());
        assert!(rules.config_for("up.example", Direction::DecryptDownloads).is_none());
        assert!(rules.config_for("dl.example", Direction::DecryptDownloads).is_some());
        assert!(!rules.intercepts("other.test"));
    }
}
