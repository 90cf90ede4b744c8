//! Client and server handshake state machines over a virtual clock.
//!
//! Both machines are pure transition functions: they take the state, the
//! current virtual time and one event, and return the new state together
//! with the messages to send.

use num_bigint::BigUint;
use num_traits::One;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::codec::{
    encode_message, CipherSuiteId, ClientHello, HandshakeMessage, MessageKind, ServerDhParams,
    ServerHello, ServerKeyExchange, TLS12_VERSION,
};
use super::keys::{
    derive_keys, open, seal, transcript_hash, verify_data, FinishedLabel, SessionKeys,
    VERIFY_DATA_LEN,
};
use super::policy::{negotiate_suite, ClientPolicy, ServerPolicy};
use super::signature::{verify_certificate, SigningKey, VerifyingKey};
use super::{alert, TlsError};
use crate::group_math::{
    dh_generate_keypair, dh_shared_secret, magnitude_bits, DhGroup, DhKeyPair,
};

const KEYPAIR_STREAM: u64 = 0x006b_6579_7061_6972;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Client,
    Server,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Rejection {
    BadSignature,
    PrimeTooSmall { magnitude_bits: u64, required: u64 },
    DegenerateValue,
}

impl Rejection {
    fn alert_code(&self) -> u8 {
        match self {
            Rejection::BadSignature => alert::DECRYPT_ERROR,
            Rejection::PrimeTooSmall { .. } => alert::INSUFFICIENT_SECURITY,
            Rejection::DegenerateValue => alert::ILLEGAL_PARAMETER,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Failure {
    Timeout { at: u64 },
    Rejected(Rejection),
    NoMutualSuite,
    SuiteNotOffered(CipherSuiteId),
    UnexpectedMessage(MessageKind),
    BadCertificate,
    BadFinished,
    BadRecord,
    InvalidPublicValue,
    Malformed,
    PeerAlert(u8),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Phase {
    Idle,
    AwaitServerHello,
    AwaitCertificate,
    AwaitServerKeyExchange,
    AwaitServerHelloDone,
    AwaitServerFinished,
    AwaitClientHello,
    AwaitClientKeyExchange,
    AwaitClientFinished,
    Established,
    Failed(Failure),
}

impl Phase {
    pub fn is_terminal(&self) -> bool {
        matches!(self, Phase::Failed(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Event {
    Start,
    Receive(HandshakeMessage),
    Tick,
}

#[derive(Debug, Clone)]
pub struct SessionState {
    pub role: Role,
    pub phase: Phase,
    /// Encoded handshake messages in the order this endpoint saw them.
    pub transcript: Vec<Vec<u8>>,
    pub client_random: Option<[u8; 32]>,
    pub server_random: Option<[u8; 32]>,
    /// Negotiated suite on the server, believed suite on the client.
    pub suite: Option<CipherSuiteId>,
    pub group: Option<DhGroup>,
    pub keypair: Option<DhKeyPair>,
    pub peer_public: Option<BigUint>,
    pub keys: Option<SessionKeys>,
    pub deadline: Option<u64>,
    pub peer_key: Option<VerifyingKey>,
    /// Client only: the plaintext sent once keys are available.
    pub app_data: Vec<u8>,
    pub sent_plaintexts: Vec<Vec<u8>>,
    pub received_plaintexts: Vec<Vec<u8>>,
    send_seq: u64,
    recv_seq: u64,
    seed: u64,
}

fn random32(seed: u64, stream: u64) -> [u8; 32] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut out = [0u8; 32];
    rng.fill_bytes(&mut out);
    out
}

impl SessionState {
    fn blank(role: Role, seed: u64) -> Self {
        SessionState {
            role,
            phase: Phase::Idle,
            transcript: Vec::new(),
            client_random: None,
            server_random: None,
            suite: None,
            group: None,
            keypair: None,
            peer_public: None,
            keys: None,
            deadline: None,
            peer_key: None,
            app_data: Vec::new(),
            sent_plaintexts: Vec::new(),
            received_plaintexts: Vec::new(),
            send_seq: 0,
            recv_seq: 0,
            seed,
        }
    }

    pub fn new_client(seed: u64, app_data: Vec<u8>) -> Self {
        let mut st = Self::blank(Role::Client, seed);
        st.client_random = Some(random32(seed, 1));
        st.app_data = app_data;
        st
    }

    pub fn new_server(seed: u64) -> Self {
        let mut st = Self::blank(Role::Server, seed);
        st.server_random = Some(random32(seed, 2));
        st.phase = Phase::AwaitClientHello;
        st
    }

    pub fn master_secret(&self) -> Option<&[u8; 48]> {
        self.keys.as_ref().map(|k| &k.master_secret)
    }

    pub fn is_established(&self) -> bool {
        self.phase == Phase::Established
    }

    pub fn failure(&self) -> Option<&Failure> {
        match &self.phase {
            Phase::Failed(f) => Some(f),
            _ => None,
        }
    }

    fn record(&mut self, m: &HandshakeMessage) -> Result<(), TlsError> {
        self.transcript.push(encode_message(m)?);
        Ok(())
    }

    fn fail(mut self, code: u8, failure: Failure) -> (Self, Vec<HandshakeMessage>) {
        self.phase = Phase::Failed(failure);
        self.deadline = None;
        (self, vec![HandshakeMessage::FatalAlert { code }])
    }

    fn keypair_seed(&self) -> u64 {
        self.seed ^ KEYPAIR_STREAM
    }
}

/// verify_data over this endpoint's transcript so far.
pub fn compute_finished(
    state: &SessionState,
    label: FinishedLabel,
) -> Option<[u8; VERIFY_DATA_LEN]> {
    let keys = state.keys.as_ref()?;
    Some(verify_data(
        &keys.master_secret,
        label,
        &transcript_hash(&state.transcript),
    ))
}

/// Bytes covered by the ServerKeyExchange signature. The suite id is only
/// appended in signed-suite mode.
pub fn ske_signed_bytes(
    client_random: &[u8; 32],
    server_random: &[u8; 32],
    params: &ServerDhParams,
    suite: Option<CipherSuiteId>,
) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + params.p.len() + params.g.len() + params.ys.len() + 8);
    out.extend_from_slice(client_random);
    out.extend_from_slice(server_random);
    out.extend(params.encode());
    if let Some(s) = suite {
        out.extend_from_slice(&s.id().to_be_bytes());
    }
    out
}

pub fn make_server_key_exchange(
    state: &SessionState,
    group: &DhGroup,
    signing_key: &SigningKey,
    signed_suite_mode: bool,
) -> Result<HandshakeMessage, TlsError> {
    make_server_key_exchange_padded(state, group, signing_key, signed_suite_mode, None)
}

/// As [`make_server_key_exchange`], with `p` left-padded to `p_len` bytes.
pub fn make_server_key_exchange_padded(
    state: &SessionState,
    group: &DhGroup,
    signing_key: &SigningKey,
    signed_suite_mode: bool,
    p_len: Option<usize>,
) -> Result<HandshakeMessage, TlsError> {
    let (Some(cr), Some(sr)) = (state.client_random, state.server_random) else {
        return Err(TlsError::State("randoms not exchanged"));
    };
    let keypair = state
        .keypair
        .as_ref()
        .ok_or(TlsError::State("no server keypair"))?;
    let suite = state.suite.ok_or(TlsError::State("no negotiated suite"))?;
    let mut params = ServerDhParams::from_values(group.p(), group.g(), keypair.public_value());
    if let Some(len) = p_len {
        params = params.pad_p_to(len);
    }
    let signed = ske_signed_bytes(&cr, &sr, &params, signed_suite_mode.then_some(suite));
    Ok(HandshakeMessage::ServerKeyExchange(ServerKeyExchange {
        params,
        signature: signing_key.sign(&signed),
    }))
}

pub fn verify_server_key_exchange(
    ske: &ServerKeyExchange,
    client_random: &[u8; 32],
    server_random: &[u8; 32],
    believed_suite: CipherSuiteId,
    verifying_key: &VerifyingKey,
    policy: &ClientPolicy,
) -> Result<(), Rejection> {
    let signed = ske_signed_bytes(
        client_random,
        server_random,
        &ske.params,
        policy.signed_suite_mode.then_some(believed_suite),
    );
    if !verifying_key.verify(&signed, &ske.signature) {
        return Err(Rejection::BadSignature);
    }
    let p = ske.params.p_value();
    let bits = magnitude_bits(&p);
    if bits < policy.min_prime_bits {
        return Err(Rejection::PrimeTooSmall {
            magnitude_bits: bits,
            required: policy.min_prime_bits,
        });
    }
    if p < BigUint::from(5u32) {
        return Err(Rejection::DegenerateValue);
    }
    let upper = &p - 1u32;
    let inside = |v: &BigUint| v > &BigUint::one() && v < &upper;
    if !inside(&ske.params.g_value()) || !inside(&ske.params.ys_value()) {
        return Err(Rejection::DegenerateValue);
    }
    Ok(())
}

fn timed_out(st: &SessionState, now: u64) -> bool {
    st.deadline.is_some_and(|d| now >= d)
}

pub fn advance_client(
    policy: &ClientPolicy,
    mut st: SessionState,
    now: u64,
    event: Event,
) -> (SessionState, Vec<HandshakeMessage>) {
    if st.phase.is_terminal() {
        return (st, Vec::new());
    }
    let msg = match event {
        Event::Start => {
            if st.phase != Phase::Idle {
                return (st, Vec::new());
            }
            let ch = HandshakeMessage::ClientHello(ClientHello {
                version: TLS12_VERSION,
                random: st.client_random.expect("client random set at construction"),
                session_id: Vec::new(),
                suites: policy.offered_suites.clone(),
                compression_methods: vec![0],
                extensions: None,
            });
            if st.record(&ch).is_err() {
                return st.fail(alert::HANDSHAKE_FAILURE, Failure::Malformed);
            }
            st.deadline = Some(now + policy.handshake_timeout_ms);
            st.phase = Phase::AwaitServerHello;
            return (st, vec![ch]);
        }
        Event::Tick => {
            if timed_out(&st, now) {
                return st.fail(alert::USER_CANCELED, Failure::Timeout { at: now });
            }
            return (st, Vec::new());
        }
        Event::Receive(m) => m,
    };
    if timed_out(&st, now) {
        return st.fail(alert::USER_CANCELED, Failure::Timeout { at: now });
    }
    match &msg {
        HandshakeMessage::FatalAlert { code } => {
            st.phase = Phase::Failed(Failure::PeerAlert(*code));
            st.deadline = None;
            return (st, Vec::new());
        }
        HandshakeMessage::WarningAlert { .. } => {
            if policy.alert_resets_timer && st.deadline.is_some() {
                st.deadline = Some(now + policy.handshake_timeout_ms);
            }
            return (st, Vec::new());
        }
        _ => {}
    }
    if policy.alert_resets_timer && st.deadline.is_some() {
        st.deadline = Some(now + policy.handshake_timeout_ms);
    }
    let cr = st.client_random.expect("client random set at construction");
    match (st.phase.clone(), msg) {
        (Phase::AwaitServerHello, m @ HandshakeMessage::ServerHello(_)) => {
            let HandshakeMessage::ServerHello(sh) = &m else {
                unreachable!()
            };
            if !policy.offered_suites.contains(&sh.suite) {
                return st.fail(alert::ILLEGAL_PARAMETER, Failure::SuiteNotOffered(sh.suite));
            }
            st.server_random = Some(sh.random);
            st.suite = Some(sh.suite);
            if st.record(&m).is_err() {
                return st.fail(alert::DECODE_ERROR, Failure::Malformed);
            }
            st.phase = Phase::AwaitCertificate;
            (st, Vec::new())
        }
        (Phase::AwaitCertificate, m @ HandshakeMessage::ServerCertificate(_)) => {
            let HandshakeMessage::ServerCertificate(cert) = &m else {
                unreachable!()
            };
            match verify_certificate(cert, &policy.trust_anchor, &policy.server_identity) {
                Some(key) => st.peer_key = Some(key),
                None => return st.fail(alert::BAD_CERTIFICATE, Failure::BadCertificate),
            }
            if st.record(&m).is_err() {
                return st.fail(alert::DECODE_ERROR, Failure::Malformed);
            }
            st.phase = Phase::AwaitServerKeyExchange;
            (st, Vec::new())
        }
        (Phase::AwaitServerKeyExchange, m @ HandshakeMessage::ServerKeyExchange(_)) => {
            let HandshakeMessage::ServerKeyExchange(ske) = &m else {
                unreachable!()
            };
            let sr = st.server_random.expect("set with ServerHello");
            let suite = st.suite.expect("set with ServerHello");
            let key = st.peer_key.as_ref().expect("set with Certificate");
            if let Err(r) = verify_server_key_exchange(ske, &cr, &sr, suite, key, policy) {
                return st.fail(r.alert_code(), Failure::Rejected(r));
            }
            st.group = Some(DhGroup::assume_safe_prime(
                ske.params.p_value(),
                ske.params.g_value(),
            ));
            st.peer_public = Some(ske.params.ys_value());
            if st.record(&m).is_err() {
                return st.fail(alert::DECODE_ERROR, Failure::Malformed);
            }
            st.phase = Phase::AwaitServerHelloDone;
            (st, Vec::new())
        }
        (Phase::AwaitServerHelloDone, m @ HandshakeMessage::ServerHelloDone) => {
            if st.record(&m).is_err() {
                return st.fail(alert::DECODE_ERROR, Failure::Malformed);
            }
            let group = st.group.clone().expect("set with ServerKeyExchange");
            let keypair = dh_generate_keypair(&group, st.keypair_seed());
            let shared = match dh_shared_secret(
                &keypair,
                st.peer_public.as_ref().expect("set with ServerKeyExchange"),
                &group,
            ) {
                Ok(s) => s,
                Err(_) => return st.fail(alert::ILLEGAL_PARAMETER, Failure::InvalidPublicValue),
            };
            let sr = st.server_random.expect("set with ServerHello");
            st.keys = Some(derive_keys(&shared, &cr, &sr));
            let cke = HandshakeMessage::ClientKeyExchange {
                public_value: keypair.public_value().to_bytes_be(),
            };
            st.keypair = Some(keypair);
            if st.record(&cke).is_err() {
                return st.fail(alert::HANDSHAKE_FAILURE, Failure::Malformed);
            }
            let vd = compute_finished(&st, FinishedLabel::Client).expect("keys derived");
            let keys = st.keys.as_ref().expect("keys derived");
            let fin = HandshakeMessage::Finished {
                sealed: seal(&keys.client_write, 0, &vd),
            };
            st.send_seq = 1;
            if st.record(&fin).is_err() {
                return st.fail(alert::HANDSHAKE_FAILURE, Failure::Malformed);
            }
            let mut out = vec![cke, fin];
            if policy.false_start {
                out.extend(send_app_data(&mut st));
            }
            st.phase = Phase::AwaitServerFinished;
            (st, out)
        }
        (Phase::AwaitServerFinished, m @ HandshakeMessage::Finished { .. }) => {
            let HandshakeMessage::Finished { sealed } = &m else {
                unreachable!()
            };
            let expected = compute_finished(&st, FinishedLabel::Server).expect("keys derived");
            let keys = st.keys.as_ref().expect("keys derived");
            match open(&keys.server_write, sealed) {
                Ok((0, vd)) if vd == expected => {}
                _ => return st.fail(alert::DECRYPT_ERROR, Failure::BadFinished),
            }
            if st.record(&m).is_err() {
                return st.fail(alert::DECODE_ERROR, Failure::Malformed);
            }
            st.recv_seq = 1;
            st.phase = Phase::Established;
            st.deadline = None;
            let out = if policy.false_start {
                Vec::new()
            } else {
                send_app_data(&mut st)
            };
            (st, out)
        }
        (Phase::Established, HandshakeMessage::ApplicationData { record }) => {
            receive_app_data(st, &record, Role::Server)
        }
        (_, m) => st.fail(
            alert::UNEXPECTED_MESSAGE,
            Failure::UnexpectedMessage(m.kind()),
        ),
    }
}

fn send_app_data(st: &mut SessionState) -> Vec<HandshakeMessage> {
    if st.app_data.is_empty() {
        return Vec::new();
    }
    let keys = st.keys.as_ref().expect("keys derived");
    let record = seal(&keys.client_write, st.send_seq, &st.app_data);
    st.send_seq += 1;
    st.sent_plaintexts.push(st.app_data.clone());
    vec![HandshakeMessage::ApplicationData { record }]
}

fn receive_app_data(
    mut st: SessionState,
    record: &[u8],
    sender: Role,
) -> (SessionState, Vec<HandshakeMessage>) {
    let keys = st.keys.as_ref().expect("established sessions have keys");
    let key = match sender {
        Role::Client => &keys.client_write,
        Role::Server => &keys.server_write,
    };
    match open(key, record) {
        Ok((seq, plaintext)) if seq == st.recv_seq => {
            st.recv_seq += 1;
            st.received_plaintexts.push(plaintext);
            (st, Vec::new())
        }
        _ => st.fail(alert::BAD_RECORD_MAC, Failure::BadRecord),
    }
}

pub fn advance_server(
    policy: &ServerPolicy,
    mut st: SessionState,
    _now: u64,
    event: Event,
) -> (SessionState, Vec<HandshakeMessage>) {
    if st.phase.is_terminal() {
        return (st, Vec::new());
    }
    let msg = match event {
        Event::Start | Event::Tick => return (st, Vec::new()),
        Event::Receive(m) => m,
    };
    match msg {
        HandshakeMessage::FatalAlert { code } => {
            st.phase = Phase::Failed(Failure::PeerAlert(code));
            return (st, Vec::new());
        }
        HandshakeMessage::WarningAlert { .. } => return (st, Vec::new()),
        _ => {}
    }
    match (st.phase.clone(), msg) {
        (Phase::AwaitClientHello, m @ HandshakeMessage::ClientHello(_)) => {
            let HandshakeMessage::ClientHello(ch) = &m else {
                unreachable!()
            };
            if policy.validate().is_err() {
                return st.fail(alert::HANDSHAKE_FAILURE, Failure::NoMutualSuite);
            }
            let suite = match negotiate_suite(&ch.suites, policy) {
                Ok(s) => s,
                Err(_) => return st.fail(alert::HANDSHAKE_FAILURE, Failure::NoMutualSuite),
            };
            st.client_random = Some(ch.random);
            st.suite = Some(suite);
            if st.record(&m).is_err() {
                return st.fail(alert::DECODE_ERROR, Failure::Malformed);
            }
            let group = policy.group_for(suite).clone();
            st.keypair = Some(dh_generate_keypair(&group, st.keypair_seed()));
            let sh = HandshakeMessage::ServerHello(ServerHello {
                version: TLS12_VERSION,
                random: st.server_random.expect("server random set at construction"),
                session_id: Vec::new(),
                suite,
                compression_method: 0,
                extensions: None,
            });
            let cert = HandshakeMessage::ServerCertificate(policy.certificate.clone());
            let ske = match make_server_key_exchange_padded(
                &st,
                &group,
                &policy.signing_key,
                policy.signed_suite_mode,
                policy.pad_p_to,
            ) {
                Ok(m) => m,
                Err(_) => return st.fail(alert::HANDSHAKE_FAILURE, Failure::Malformed),
            };
            let out = vec![sh, cert, ske, HandshakeMessage::ServerHelloDone];
            for m in &out {
                if st.record(m).is_err() {
                    return st.fail(alert::HANDSHAKE_FAILURE, Failure::Malformed);
                }
            }
            st.group = Some(group);
            st.phase = Phase::AwaitClientKeyExchange;
            (st, out)
        }
        (Phase::AwaitClientKeyExchange, m @ HandshakeMessage::ClientKeyExchange { .. }) => {
            let HandshakeMessage::ClientKeyExchange { public_value } = &m else {
                unreachable!()
            };
            let yc = BigUint::from_bytes_be(public_value);
            let group = st.group.as_ref().expect("set with ClientHello");
            let keypair = st.keypair.as_ref().expect("set with ClientHello");
            let shared = match dh_shared_secret(keypair, &yc, group) {
                Ok(s) => s,
                Err(_) => return st.fail(alert::ILLEGAL_PARAMETER, Failure::InvalidPublicValue),
            };
            st.keys = Some(derive_keys(
                &shared,
                &st.client_random.expect("set with ClientHello"),
                &st.server_random.expect("set at construction"),
            ));
            st.peer_public = Some(yc);
            if st.record(&m).is_err() {
                return st.fail(alert::DECODE_ERROR, Failure::Malformed);
            }
            st.phase = Phase::AwaitClientFinished;
            (st, Vec::new())
        }
        (Phase::AwaitClientFinished, m @ HandshakeMessage::Finished { .. }) => {
            let HandshakeMessage::Finished { sealed } = &m else {
                unreachable!()
            };
            let expected = compute_finished(&st, FinishedLabel::Client).expect("keys derived");
            let keys = st.keys.as_ref().expect("keys derived");
            match open(&keys.client_write, sealed) {
                Ok((0, vd)) if vd == expected => {}
                _ => return st.fail(alert::DECRYPT_ERROR, Failure::BadFinished),
            }
            if st.record(&m).is_err() {
                return st.fail(alert::DECODE_ERROR, Failure::Malformed);
            }
            st.recv_seq = 1;
            let vd = compute_finished(&st, FinishedLabel::Server).expect("keys derived");
            let keys = st.keys.as_ref().expect("keys derived");
            let fin = HandshakeMessage::Finished {
                sealed: seal(&keys.server_write, 0, &vd),
            };
            st.send_seq = 1;
            if st.record(&fin).is_err() {
                return st.fail(alert::HANDSHAKE_FAILURE, Failure::Malformed);
            }
            st.phase = Phase::Established;
            (st, vec![fin])
        }
        (Phase::Established, HandshakeMessage::ApplicationData { record }) => {
            receive_app_data(st, &record, Role::Client)
        }
        (_, m) => st.fail(
            alert::UNEXPECTED_MESSAGE,
            Failure::UnexpectedMessage(m.kind()),
        ),
    }
}
