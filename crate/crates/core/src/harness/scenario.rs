//! Scenario files and their translation into endpoint policies.
//!
//! ```text
//! seed = 7
//! plaintext = GET /inbox
//! [server]
//! suites = DHE_STRONG, DHE_EXPORT
//! [client]
//! suites = DHE_STRONG
//! handshake_timeout_ms = 5000
//! [attacker]
//! logdb = export48.logdb
//! descent_cost_ms = 100
//! ```

use std::path::PathBuf;
use std::sync::Arc;

use num_bigint::BigUint;

use super::gen::{shared_group, SHARED_EXPORT_SEED, SHARED_STRONG_SEED};
use super::{parse_bool, parse_key_values, parse_u64, HarnessError};
use crate::attacker::{AttackerConfig, CostModel};
use crate::dlog::{LogDb, DEFAULT_DESCENT_BUDGET};
use crate::group_math::{generate_safe_prime, parse_hex, DhGroup};
use crate::tls::{
    CertificateAuthority, CipherSuiteId, ClientPolicy, ServerPolicy, SigningKey,
    DEFAULT_HANDSHAKE_TIMEOUT_MS,
};

pub const DEFAULT_EXPORT_BITS: u64 = 48;
pub const DEFAULT_STRONG_BITS: u64 = 96;
pub const DEFAULT_LINK_DELAY_MS: u64 = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct ServerConfig {
    pub suites: Vec<CipherSuiteId>,
    pub export_bits: u64,
    pub strong_bits: u64,
    pub export_group: Option<(BigUint, BigUint)>,
    pub strong_group: Option<(BigUint, BigUint)>,
    pub fresh_group_per_install: bool,
    pub install_seed: u64,
    pub signed_suite_mode: bool,
    pub pad_p_to: Option<usize>,
    pub identity: String,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            suites: vec![CipherSuiteId::DheStrong, CipherSuiteId::DheExport],
            export_bits: DEFAULT_EXPORT_BITS,
            strong_bits: DEFAULT_STRONG_BITS,
            export_group: None,
            strong_group: None,
            fresh_group_per_install: false,
            install_seed: 1,
            signed_suite_mode: false,
            pad_p_to: None,
            identity: "server.example".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientConfig {
    pub suites: Vec<CipherSuiteId>,
    pub min_prime_bits: u64,
    pub handshake_timeout_ms: u64,
    pub alert_resets_timer: bool,
    pub false_start: bool,
    /// Follows the server's mode when unset.
    pub signed_suite_mode: Option<bool>,
}

impl Default for ClientConfig {
    fn default() -> Self {
        ClientConfig {
            suites: vec![CipherSuiteId::DheStrong, CipherSuiteId::DheExport],
            min_prime_bits: 0,
            handshake_timeout_ms: DEFAULT_HANDSHAKE_TIMEOUT_MS,
            alert_resets_timer: true,
            false_start: false,
            signed_suite_mode: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LogDbSource {
    None,
    File(PathBuf),
    /// Build one for the shared export group before the run.
    PrecomputeShared,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackerSettings {
    pub logdb: LogDbSource,
    pub stall_interval_ms: Option<u64>,
    pub early_start_offset_ms: u64,
    /// Injected descent cost; measured wall time when unset.
    pub descent_cost_ms: Option<u64>,
    pub descent_budget: u64,
    pub descent_seed: u64,
    pub workers: usize,
    pub modify_plaintext: Option<Vec<u8>>,
}

impl Default for AttackerSettings {
    fn default() -> Self {
        AttackerSettings {
            logdb: LogDbSource::None,
            stall_interval_ms: None,
            early_start_offset_ms: 0,
            descent_cost_ms: None,
            descent_budget: DEFAULT_DESCENT_BUDGET,
            descent_seed: 0,
            workers: 1,
            modify_plaintext: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub link_delay_ms: u64,
    pub plaintext: Vec<u8>,
    pub server: ServerConfig,
    pub client: ClientConfig,
    pub attacker: Option<AttackerSettings>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 1,
            link_delay_ms: DEFAULT_LINK_DELAY_MS,
            plaintext: b"GET /inbox HTTP/1.1".to_vec(),
            server: ServerConfig::default(),
            client: ClientConfig::default(),
            attacker: None,
        }
    }
}

fn parse_suites(field: &str, v: &str) -> Result<Vec<CipherSuiteId>, HarnessError> {
    let mut out = Vec::new();
    for name in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let s = CipherSuiteId::parse(name).ok_or_else(|| {
            HarnessError::config(
                field,
                format!("unknown suite `{name}`; use DHE_STRONG or DHE_EXPORT"),
            )
        })?;
        if !out.contains(&s) {
            out.push(s);
        }
    }
    Ok(out)
}

fn parse_big(field: &str, v: &str) -> Result<BigUint, HarnessError> {
    parse_hex(v).map_err(|e| HarnessError::config(field, e.to_string()))
}

/// Parses scenario text. Relative log db paths are kept as written; the
/// caller resolves them.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, HarnessError> {
    let pairs = parse_key_values(text, &["server", "client", "attacker"])?;
    let mut cfg = ScenarioConfig::default();
    let mut attacker: Option<AttackerSettings> = None;
    let (mut export_p, mut export_g, mut strong_p, mut strong_g) = (None, None, None, None);
    if text.lines().any(|l| l.trim() == "[attacker]") {
        attacker = Some(AttackerSettings::default());
    }
    for (key, v) in &pairs {
        let k = key.as_str();
        match k {
            "seed" => cfg.seed = parse_u64(k, v)?,
            "link_delay_ms" => cfg.link_delay_ms = parse_u64(k, v)?,
            "plaintext" => cfg.plaintext = v.as_bytes().to_vec(),
            "server.suites" => cfg.server.suites = parse_suites(k, v)?,
            "server.export_bits" => cfg.server.export_bits = parse_u64(k, v)?,
            "server.strong_bits" => cfg.server.strong_bits = parse_u64(k, v)?,
            "server.export_p" => export_p = Some(parse_big(k, v)?),
            "server.export_g" => export_g = Some(parse_big(k, v)?),
            "server.strong_p" => strong_p = Some(parse_big(k, v)?),
            "server.strong_g" => strong_g = Some(parse_big(k, v)?),
            "server.fresh_group_per_install" => {
                cfg.server.fresh_group_per_install = parse_bool(k, v)?
            }
            "server.install_seed" => cfg.server.install_seed = parse_u64(k, v)?,
            "server.signed_suite_mode" => cfg.server.signed_suite_mode = parse_bool(k, v)?,
            "server.pad_p_to_bytes" => cfg.server.pad_p_to = Some(parse_u64(k, v)? as usize),
            "server.identity" => cfg.server.identity = v.clone(),
            "client.suites" => cfg.client.suites = parse_suites(k, v)?,
            "client.min_prime_bits" => cfg.client.min_prime_bits = parse_u64(k, v)?,
            "client.handshake_timeout_ms" => cfg.client.handshake_timeout_ms = parse_u64(k, v)?,
            "client.alert_resets_timer" => cfg.client.alert_resets_timer = parse_bool(k, v)?,
            "client.false_start" => cfg.client.false_start = parse_bool(k, v)?,
            "client.signed_suite_mode" => cfg.client.signed_suite_mode = Some(parse_bool(k, v)?),
            _ if k.starts_with("attacker.") => {
                let a = attacker.get_or_insert_with(AttackerSettings::default);
                match &k["attacker.".len()..] {
                    "logdb" => {
                        a.logdb = match v.as_str() {
                            "" | "none" => LogDbSource::None,
                            "precompute" => LogDbSource::PrecomputeShared,
                            path => LogDbSource::File(PathBuf::from(path)),
                        }
                    }
                    "stall_interval_ms" => a.stall_interval_ms = Some(parse_u64(k, v)?),
                    "early_start_offset_ms" => a.early_start_offset_ms = parse_u64(k, v)?,
                    "descent_cost_ms" => {
                        a.descent_cost_ms = if v == "measured" {
                            None
                        } else {
                            Some(parse_u64(k, v)?)
                        }
                    }
                    "descent_budget" => a.descent_budget = parse_u64(k, v)?,
                    "descent_seed" => a.descent_seed = parse_u64(k, v)?,
                    "workers" => a.workers = parse_u64(k, v)? as usize,
                    "modify_plaintext" => a.modify_plaintext = Some(v.as_bytes().to_vec()),
                    _ => return Err(HarnessError::config(k, "unknown key")),
                }
            }
            _ => return Err(HarnessError::config(k, "unknown key")),
        }
    }
    cfg.server.export_group = pair_up("server.export_p", export_p, "server.export_g", export_g)?;
    cfg.server.strong_group = pair_up("server.strong_p", strong_p, "server.strong_g", strong_g)?;
    cfg.attacker = attacker;
    cfg.validate()?;
    Ok(cfg)
}

fn pair_up(
    pf: &str,
    p: Option<BigUint>,
    gf: &str,
    g: Option<BigUint>,
) -> Result<Option<(BigUint, BigUint)>, HarnessError> {
    match (p, g) {
        (None, None) => Ok(None),
        (Some(p), Some(g)) => Ok(Some((p, g))),
        (Some(_), None) => Err(HarnessError::config(gf, "required when the prime is given")),
        (None, Some(_)) => Err(HarnessError::config(
            pf,
            "required when the generator is given",
        )),
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.server.suites.is_empty() {
            return Err(HarnessError::config(
                "server.suites",
                "at least one suite must be enabled",
            ));
        }
        if self.client.suites.is_empty() {
            return Err(HarnessError::config(
                "client.suites",
                "at least one suite must be offered",
            ));
        }
        if self.client.handshake_timeout_ms == 0 {
            return Err(HarnessError::config(
                "client.handshake_timeout_ms",
                "must be positive",
            ));
        }
        for (field, bits) in [
            ("server.export_bits", self.server.export_bits),
            ("server.strong_bits", self.server.strong_bits),
        ] {
            if !(16..=512).contains(&bits) {
                return Err(HarnessError::config(field, "must be between 16 and 512"));
            }
        }
        if let Some(a) = &self.attacker {
            if a.stall_interval_ms == Some(0) {
                return Err(HarnessError::config(
                    "attacker.stall_interval_ms",
                    "must be positive",
                ));
            }
            if a.descent_budget == 0 {
                return Err(HarnessError::config(
                    "attacker.descent_budget",
                    "must be positive",
                ));
            }
        }
        Ok(())
    }

    /// The export group servers share unless they randomize per install.
    pub fn shared_export_group(&self) -> Result<DhGroup, HarnessError> {
        match &self.server.export_group {
            Some((p, g)) => DhGroup::from_safe_prime(p.clone(), g.clone())
                .map_err(|e| HarnessError::config("server.export_p", e.to_string())),
            None => Ok(shared_group(self.server.export_bits, SHARED_EXPORT_SEED)?),
        }
    }

    fn export_group(&self) -> Result<DhGroup, HarnessError> {
        let shared = self.shared_export_group()?;
        if !self.server.fresh_group_per_install {
            return Ok(shared);
        }
        let mut seed = self.server.install_seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ 0x0f0f;
        loop {
            let g = generate_safe_prime(shared.magnitude_bits(), seed)?;
            if g.p() != shared.p() {
                return Ok(g);
            }
            seed = seed.wrapping_add(1);
        }
    }

    fn strong_group(&self) -> Result<DhGroup, HarnessError> {
        match &self.server.strong_group {
            Some((p, g)) => DhGroup::from_safe_prime(p.clone(), g.clone())
                .map_err(|e| HarnessError::config("server.strong_p", e.to_string())),
            None => Ok(shared_group(self.server.strong_bits, SHARED_STRONG_SEED)?),
        }
    }

    pub fn client_seed(&self) -> u64 {
        self.seed.wrapping_mul(2).wrapping_add(1)
    }

    pub fn server_seed(&self) -> u64 {
        self.seed.wrapping_mul(2).wrapping_add(2)
    }

    /// Endpoint policies. The CA and the server key derive from `seed`.
    pub fn policies(&self) -> Result<(ClientPolicy, ServerPolicy), HarnessError> {
        let ca = CertificateAuthority::from_seed(self.seed ^ 0xca);
        let signing_key = SigningKey::from_seed(self.seed ^ 0x5e);
        let certificate = ca.issue(&self.server.identity, &signing_key.verifying_key());
        let server = ServerPolicy {
            enabled_suites: self.server.suites.clone(),
            strong_group: self.strong_group()?,
            export_group: self.export_group()?,
            fresh_group_per_install: self.server.fresh_group_per_install,
            signed_suite_mode: self.server.signed_suite_mode,
            pad_p_to: self.server.pad_p_to,
            signing_key,
            certificate,
        };
        let client = ClientPolicy {
            offered_suites: self.client.suites.clone(),
            min_prime_bits: self.client.min_prime_bits,
            handshake_timeout_ms: self.client.handshake_timeout_ms,
            alert_resets_timer: self.client.alert_resets_timer,
            false_start: self.client.false_start,
            signed_suite_mode: self
                .client
                .signed_suite_mode
                .unwrap_or(self.server.signed_suite_mode),
            trust_anchor: ca.trust_anchor(),
            server_identity: self.server.identity.clone(),
        };
        Ok((client, server))
    }

    pub(crate) fn attacker_config(
        &self,
        settings: &AttackerSettings,
        logdbs: Vec<Arc<LogDb>>,
    ) -> AttackerConfig {
        let mut cfg = AttackerConfig::new(logdbs, self.client.handshake_timeout_ms);
        if let Some(i) = settings.stall_interval_ms {
            cfg.stall_interval_ms = i;
        }
        cfg.early_start_offset_ms = settings.early_start_offset_ms;
        cfg.cost = settings
            .descent_cost_ms
            .map_or(CostModel::Measured, CostModel::Injected);
        cfg.descent_budget = settings.descent_budget;
        cfg.descent_seed = settings.descent_seed;
        cfg.workers = settings.workers.max(1);
        cfg.modify = settings.modify_plaintext.clone();
        cfg
    }
}
