//! Endpoint configuration and suite negotiation.

use super::codec::{Certificate, CipherSuiteId};
use super::signature::{SigningKey, VerifyingKey};
use super::TlsError;
use crate::group_math::DhGroup;

pub const DEFAULT_HANDSHAKE_TIMEOUT_MS: u64 = 5000;

#[derive(Debug, Clone)]
pub struct ClientPolicy {
    /// In preference order; carried as-is in the ClientHello.
    pub offered_suites: Vec<CipherSuiteId>,
    /// Compared against the magnitude of `p`, never its encoded length.
    pub min_prime_bits: u64,
    pub handshake_timeout_ms: u64,
    /// `true` is the vulnerable timer: every incoming message, warning alerts
    /// included, re-arms the deadline. `false` keeps one absolute deadline.
    pub alert_resets_timer: bool,
    pub false_start: bool,
    /// The ServerKeyExchange signature also covers the negotiated suite id.
    pub signed_suite_mode: bool,
    pub trust_anchor: VerifyingKey,
    pub server_identity: String,
}

#[derive(Debug, Clone)]
pub struct ServerPolicy {
    pub enabled_suites: Vec<CipherSuiteId>,
    pub strong_group: DhGroup,
    pub export_group: DhGroup,
    /// Informational; the caller generated `export_group` for this install
    /// rather than using a shared one.
    pub fresh_group_per_install: bool,
    pub signed_suite_mode: bool,
    /// Zero-pads the encoding of `p` to this many bytes.
    pub pad_p_to: Option<usize>,
    pub signing_key: SigningKey,
    pub certificate: Certificate,
}

impl ServerPolicy {
    pub fn validate(&self) -> Result<(), TlsError> {
        if self.enabled_suites.is_empty() {
            return Err(TlsError::Config(
                "server must enable at least one suite".into(),
            ));
        }
        Ok(())
    }

    pub fn group_for(&self, suite: CipherSuiteId) -> &DhGroup {
        match suite {
            CipherSuiteId::DheStrong => &self.strong_group,
            CipherSuiteId::DheExport => &self.export_group,
        }
    }
}

/// The mutually supported suite the server ranks highest.
pub fn negotiate_suite(
    client_suites: &[CipherSuiteId],
    server: &ServerPolicy,
) -> Result<CipherSuiteId, TlsError> {
    client_suites
        .iter()
        .filter(|s| server.enabled_suites.contains(s))
        .max_by_key(|s| s.rank())
        .copied()
        .ok_or(TlsError::NoMutualSuite)
}
