//! Local certificate authority and per-host leaf certificates for TLS
//! interception.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rcgen::{
    BasicConstraints, CertificateParams, DistinguishedName, DnType, ExtendedKeyUsagePurpose, IsCa, Issuer, KeyPair,
    KeyUsagePurpose,
};
use rustls::pki_types::{CertificateDer, PrivateKeyDer, PrivatePkcs8KeyDer};
use rustls::ServerConfig;
use time::{Duration, OffsetDateTime};

#[derive(Debug, thiserror::Error)]
pub enum CaError {
    #[error("certificate generation failed: {0}")]
    Generate(#[from] rcgen::Error),
    #[error("tls setup failed: {0}")]
    Tls(#[from] rustls::Error),
}

pub trait Clock: Send + Sync {
    fn now(&self) -> OffsetDateTime;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> OffsetDateTime {
        OffsetDateTime::now_utc()
    }
}

pub struct CertificateAuthority {
    cert_pem: String,
    cert_der: CertificateDer<'static>,
    key_pem: String,
    issuer: Issuer<'static, KeyPair>,
}

impl std::fmt::Debug for CertificateAuthority {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CertificateAuthority").finish_non_exhaustive()
    }
}

impl CertificateAuthority {
    /// A fresh self-signed CA valid for ten years from `now`.
    pub fn generate(common_name: &str, now: OffsetDateTime) -> Result<Self, CaError> {
        let key = KeyPair::generate()?;
        let mut params = CertificateParams::new(Vec::<String>::new())?;
        let mut dn = DistinguishedName::new();
        dn.push(DnType::CommonName, common_name);
        params.distinguished_name = dn;
        params.is_ca = IsCa::Ca(BasicConstraints::Constrained(0));
        params.key_usages = vec![KeyUsagePurpose::KeyCertSign, KeyUsagePurpose::CrlSign, KeyUsagePurpose::DigitalSignature];
        params.not_before = now - Duration::hours(1);
        params.not_after = now + Duration::days(3650);
        let cert = params.self_signed(&key)?;
        let key_pem = key.serialize_pem();
        Ok(CertificateAuthority {
            cert_pem: cert.pem(),
            cert_der: cert.der().clone(),
            key_pem,
            issuer: Issuer::new(params, key),
        })
    }

    pub fn from_pem(cert_pem: &str, key_pem: &str) -> Result<Self, CaError> {
        let key = KeyPair::from_pem(key_pem)?;
        let der = rustls_pemfile::certs(&mut cert_pem.as_bytes())
            .next()
            .and_then(Result::ok)
            .ok_or(rcgen::Error::CouldNotParseCertificate)?;
        let issuer = Issuer::from_ca_cert_der(&der, key)?;
        Ok(CertificateAuthority {
            cert_pem: cert_pem.to_string(),
            cert_der: der,
            key_pem: key_pem.to_string(),
            issuer,
        })
    }

    /// The CA certificate, for installing into client trust stores.
    pub fn cert_pem(&self) -> &str {
        &self.cert_pem
    }

    pub fn cert_der(&self) -> &CertificateDer<'static> {
        &self.cert_der
    }

    pub fn key_pem(&self) -> &str {
        &self.key_pem
    }

    /// Signs a server certificate for `host`, returning the chain and key.
    pub fn issue(
        &self,
        host: &str,
        not_before: OffsetDateTime,
        not_after: OffsetDateTime,
    ) -> Result<(Vec<CertificateDer<'static>>, PrivateKeyDer<'static>), CaError> {
        let key = KeyPair::generate()?;
        let mut params = CertificateParams::new(vec![host.to_string()])?;
        let mut dn = DistinguishedName::new();
        dn.push(DnType::CommonName, host);
        params.distinguished_name = dn;
        params.key_usages = vec![KeyUsagePurpose::DigitalSignature, KeyUsagePurpose::KeyEncipherment];
        params.extended_key_usages = vec![ExtendedKeyUsagePurpose::ServerAuth];
        params.not_before = not_before;
        params.not_after = not_after;
        let cert = params.signed_by(&key, &self.issuer)?;
        let key = PrivateKeyDer::Pkcs8(PrivatePkcs8KeyDer::from(key.serialize_der()));
        Ok((vec![cert.der().clone(), self.cert_der.clone()], key))
    }
}

/// A cached leaf and the TLS server configuration built from it.
#[derive(Debug)]
pub struct Leaf {
    pub host: String,
    pub not_after: OffsetDateTime,
    pub cert: CertificateDer<'static>,
    pub server_config: Arc<ServerConfig>,
}

/// Leaf certificates generated on demand and kept in memory until they
/// approach expiry.
pub struct LeafCache {
    ca: Arc<CertificateAuthority>,
    clock: Arc<dyn Clock>,
    lifetime: Duration,
    entries: Mutex<HashMap<String, Arc<Leaf>>>,
}

impl std::fmt::Debug for LeafCache {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LeafCache").field("lifetime", &self.lifetime).finish_non_exhaustive()
    }
}

/// Leaves this close to expiry are replaced rather than served.
const RENEW_MARGIN: Duration = Duration::minutes(5);

impl LeafCache {
    pub fn new(ca: Arc<CertificateAuthority>, clock: Arc<dyn Clock>, lifetime: Duration) -> Self {
        LeafCache {
            ca,
            clock,
            lifetime,
            entries: Mutex::new(HashMap::new()),
        }
    }

    pub fn ca(&self) -> &CertificateAuthority {
        &self.ca
    }

    pub fn leaf(&self, host: &str) -> Result<Arc<Leaf>, CaError> {
        let host = host.to_ascii_lowercase();
        let now = self.clock.now();
        let mut entries = self.entries.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(leaf) = entries.get(&host) {
            if now + RENEW_MARGIN < leaf.not_after {
                return Ok(leaf.clone());
            }
            tracing::info!(host = %host, "leaf certificate expired, regenerating");
        }
        let not_after = now + self.lifetime;
        let (chain, key) = self.ca.issue(&host, now - Duration::hours(1), not_after)?;
        let cert = chain[0].clone();
        let mut config = ServerConfig::builder_with_provider(crate::crypto_provider())
            .with_safe_default_protocol_versions()?
            .with_no_client_auth()
            .with_single_cert(chain, key)?;
        config.alpn_protocols = vec![b"http/1.1".to_vec()];
        let leaf = Arc::new(Leaf {
            host: host.clone(),
            not_after,
            cert,
            server_config: Arc::new(config),
        });
        entries.insert(host, leaf.clone());
        Ok(leaf)
    }
}
