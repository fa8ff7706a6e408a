//! TOML configuration for the proxy.
//!
//! ```toml
//! listen = "127.0.0.1:8080"
//! body_cap = 67108864
//! log_level = "info"
//!
//! [key]
//! file = "photo.key"        # or: env = "JPEGVEIL_KEY"
//!
//! [ca]
//! cert = "ca.pem"
//! key = "ca-key.pem"
//! generate = true           # create both files when missing
//!
//! [[rule]]
//! host = "*.photos.example"
//! directions = ["encrypt_uploads", "decrypt_downloads"]
//! components = "both"
//! ```
//!
//! Relative paths are resolved against the config file's directory.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use jpegveil_core::{CipherConfig, CipherKey, Components};
use rustls::pki_types::CertificateDer;
use serde::Deserialize;
use time::{Duration, OffsetDateTime};

use crate::ca::{CertificateAuthority, LeafCache, SystemClock};
use crate::rules::{Direction, HostPattern, ProxyRule, RuleSet};
use crate::server::{ProxySettings, Resolver};

pub const DEFAULT_BODY_CAP: u64 = 64 * 1024 * 1024;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Parse(String),
    #[error("key source must name exactly one of file or env")]
    KeySource,
    #[error("environment variable {0} is not set")]
    KeyEnvMissing(String),
    #[error(transparent)]
    Key(#[from] jpegveil_core::CipherError),
    #[error("rule {index}: {reason}")]
    Rule { index: usize, reason: String },
    #[error("certificate authority: {0}")]
    Ca(String),
}

impl ConfigError {
    pub fn code(&self) -> &'static str {
        match self {
            ConfigError::Io { .. } => "io",
            ConfigError::Parse(_) => "config-parse",
            ConfigError::KeySource => "key-source",
            ConfigError::KeyEnvMissing(_) => "key-env-missing",
            ConfigError::Key(e) => e.code(),
            ConfigError::Rule { .. } => "invalid-rule",
            ConfigError::Ca(_) => "ca",
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>, ConfigError> {
    std::fs::read(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Where the cipher key comes from. Key files are used as raw bytes;
/// environment variables as the bytes of their value.
#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeySource {
    pub file: Option<PathBuf>,
    pub env: Option<String>,
}

impl KeySource {
    pub fn load(&self) -> Result<CipherKey, ConfigError> {
        let bytes = match (&self.file, &self.env) {
            (Some(path), None) => read(path)?,
            (None, Some(name)) => std::env::var_os(name)
                .ok_or_else(|| ConfigError::KeyEnvMissing(name.clone()))?
                .into_encoded_bytes(),
            _ => return Err(ConfigError::KeySource),
        };
        Ok(CipherKey::new(bytes)?)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaConfig {
    pub cert: PathBuf,
    pub key: PathBuf,
    #[serde(default = "yes")]
    pub generate: bool,
    /// Extra copy of the CA certificate for handing to clients.
    pub export: Option<PathBuf>,
    #[serde(default = "default_leaf_hours")]
    pub leaf_lifetime_hours: i64,
}

fn yes() -> bool {
    true
}

fn default_leaf_hours() -> i64 {
    24 * 7
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleConfig {
    pub host: String,
    #[serde(default = "both_directions")]
    pub directions: Vec<Direction>,
    #[serde(default = "default_components")]
    pub components: String,
}

fn both_directions() -> Vec<Direction> {
    vec![Direction::EncryptUploads, Direction::DecryptDownloads]
}

fn default_components() -> String {
    "both".into()
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UpstreamConfig {
    /// Additional PEM files of roots trusted for origin servers.
    #[serde(default)]
    pub extra_roots: Vec<PathBuf>,
    /// Trust the bundled public web roots as well.
    #[serde(default = "yes")]
    pub public_roots: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProxyConfig {
    #[serde(default = "default_listen")]
    pub listen: String,
    #[serde(default = "default_cap")]
    pub body_cap: u64,
    #[serde(default = "default_log_level")]
    pub log_level: String,
    pub key: KeySource,
    pub ca: Option<CaConfig>,
    #[serde(default, rename = "rule")]
    pub rules: Vec<RuleConfig>,
    /// Authority (`host:port` or `host`) to socket address overrides.
    #[serde(default)]
    pub resolve: HashMap<String, String>,
    #[serde(default)]
    pub upstream: UpstreamConfig,
}

fn default_listen() -> String {
    "127.0.0.1:8080".into()
}

fn default_cap() -> u64 {
    DEFAULT_BODY_CAP
}

fn default_log_level() -> String {
    "info".into()
}

impl ProxyConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = String::from_utf8(read(path)?).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Parses `text`, resolving relative paths against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut cfg: ProxyConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = cfg.key.file.as_mut() {
            fix(p);
        }
        if let Some(ca) = cfg.ca.as_mut() {
            fix(&mut ca.cert);
            fix(&mut ca.key);
            if let Some(p) = ca.export.as_mut() {
                fix(p);
            }
        }
        cfg.upstream.extra_roots.iter_mut().for_each(fix);
        Ok(cfg)
    }

    pub fn rules(&self) -> Result<RuleSet, ConfigError> {
        let key = self.key.load()?;
        let mut rules = Vec::new();
        for (index, r) in self.rules.iter().enumerate() {
            let bad = |reason: String| ConfigError::Rule { index, reason };
            let pattern: HostPattern = r.host.parse().map_err(|e: crate::rules::InvalidPattern| bad(e.to_string()))?;
            let components: Components = r.components.parse().map_err(|e: String| bad(e))?;
            rules.push(ProxyRule {
                pattern,
                directions: r.directions.clone(),
                config: Arc::new(CipherConfig {
                    key: key.clone(),
                    components,
                }),
            });
        }
        Ok(RuleSet::new(rules))
    }

    /// Loads the CA, creating it first when allowed and missing.
    pub fn certificate_authority(&self) -> Result<Option<CertificateAuthority>, ConfigError> {
        let Some(ca) = &self.ca else { return Ok(None) };
        let loaded = if ca.cert.exists() || !ca.generate {
            let cert = String::from_utf8(read(&ca.cert)?).map_err(|e| ConfigError::Ca(e.to_string()))?;
            let key = String::from_utf8(read(&ca.key)?).map_err(|e| ConfigError::Ca(e.to_string()))?;
            CertificateAuthority::from_pem(&cert, &key).map_err(|e| ConfigError::Ca(e.to_string()))?
        } else {
            let fresh = CertificateAuthority::generate("jpegveil interception CA", OffsetDateTime::now_utc())
                .map_err(|e| ConfigError::Ca(e.to_string()))?;
            write_private(&ca.key, fresh.key_pem())?;
            write(&ca.cert, fresh.cert_pem())?;
            tracing::info!(cert = %ca.cert.display(), "generated interception CA");
            fresh
        };
        if let Some(export) = &ca.export {
            write(export, loaded.cert_pem())?;
        }
        Ok(Some(loaded))
    }

    fn upstream_roots(&self) -> Result<Vec<CertificateDer<'static>>, ConfigError> {
        let mut roots = Vec::new();
        for path in &self.upstream.extra_roots {
            let pem = read(path)?;
            for cert in rustls_pemfile::certs(&mut pem.as_slice()) {
                roots.push(cert.map_err(|source| ConfigError::Io {
                    path: path.clone(),
                    source,
                })?);
            }
        }
        Ok(roots)
    }

    /// Everything the running proxy needs, resolved from files and env.
    pub fn settings(&self) -> Result<ProxySettings, ConfigError> {
        let leaves = self.certificate_authority()?.map(|ca| {
            let lifetime = Duration::hours(self.ca.as_ref().map_or(default_leaf_hours(), |c| c.leaf_lifetime_hours));
            LeafCache::new(Arc::new(ca), Arc::new(SystemClock), lifetime)
        });
        Ok(ProxySettings::new(
            self.rules()?,
            leaves,
            Resolver::new(self.resolve.clone()),
            self.upstream_roots()?,
            self.upstream.public_roots,
            usize::try_from(self.body_cap).unwrap_or(usize::MAX),
        ))
    }
}

fn write(path: &Path, text: &str) -> Result<(), ConfigError> {
    std::fs::write(path, text).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_private(path: &Path, text: &str) -> Result<(), ConfigError> {
    write(path, text)?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        std::fs::set_permissions(path, std::fs::Permissions::from_mode(0o600)).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_full_config() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("k.bin"), [9u8; 32]).unwrap();
        let text = r#"
            listen = "127.0.0.1:0"
            body_cap = 1024
            [key]
            file = "k.bin"
            [ca]
            cert = "ca.pem"
            key = "ca.key"
            export = "export.pem"
            [[rule]]
            host = "*.photos.test"
            directions = ["encrypt_uploads"]
            components = "dc"
            [[rule]]
            host = "cdn.test"
            [resolve]
            "a.photos.test:443" = "127.0.0.1:9999"
        "#;
        let cfg = ProxyConfig::parse(text, dir.path()).unwrap();
        assert_eq!(cfg.body_cap, 1024);
        assert_eq!(cfg.key.file.as_deref(), Some(dir.path().join("k.bin").as_path()));
        let rules = cfg.rules().unwrap();
        let up = rules.config_for("a.photos.test", Direction::EncryptUploads).unwrap();
        assert_eq!(up.components, Components::DcOnly);
        assert!(rules.config_for("a.photos.test", Direction::DecryptDownloads).is_none());
        assert!(rules.config_for("cdn.test", Direction::DecryptDownloads).is_some());

        let ca = cfg.certificate_authority().unwrap().unwrap();
        let exported = std::fs::read_to_string(dir.path().join("export.pem")).unwrap();
        assert_eq!(exported, ca.cert_pem());
        // A second load reuses the files written by the first.
        let again = cfg.certificate_authority().unwrap().unwrap();
        assert_eq!(again.cert_der(), ca.cert_der());
    }

    #[test]
    fn rejects_bad_input() {
        let base = Path::new("/nonexistent");
        assert_eq!(ProxyConfig::parse("listen = 1", base).unwrap_err().code(), "config-parse");
        let two = ProxyConfig::parse("[key]\nfile = \"a\"\nenv = \"B\"", base).unwrap();
        assert_eq!(two.rules().unwrap_err().code(), "key-source");
        let missing = ProxyConfig::parse("[key]\nenv = \"JPEGVEIL_SURELY_UNSET_VAR\"", base).unwrap();
        assert_eq!(missing.rules().unwrap_err().code(), "key-env-missing");
        let typo = ProxyConfig::parse("[key]\nfile = \"a\"\n[[rule]]\nhost = \"h\"\nbogus = 1", base);
        assert!(typo.is_err());
    }
}
