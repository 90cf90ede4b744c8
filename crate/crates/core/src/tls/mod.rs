//! Simplified TLS 1.2 DHE: wire codec, key schedule, signatures, endpoint
//! policies and the client/server state machines.

pub mod codec;
pub mod keys;
pub mod policy;
pub mod session;
pub mod signature;

pub use codec::{
    decode_message, encode_message, Certificate, CipherSuiteId, ClientHello, HandshakeMessage,
    MessageKind, ServerDhParams, ServerHello, ServerKeyExchange, TLS12_VERSION,
};
pub use keys::{
    derive_keys, open, prf, seal, transcript_hash, verify_data, FinishedLabel, RecordKey,
    SessionKeys,
};
pub use policy::{negotiate_suite, ClientPolicy, ServerPolicy, DEFAULT_HANDSHAKE_TIMEOUT_MS};
pub use session::{
    advance_client, advance_server, compute_finished, make_server_key_exchange,
    make_server_key_exchange_padded, ske_signed_bytes, verify_server_key_exchange, Event, Failure,
    Phase, Rejection, Role, SessionState,
};
pub use signature::{verify_certificate, CertificateAuthority, SigningKey, VerifyingKey};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TlsError {
    #[error("encode error: {0}")]
    Encode(&'static str),
    #[error("decode error: {0}")]
    Decode(String),
    #[error("record authentication failed")]
    RecordAuthentication,
    #[error("no mutually supported cipher suite")]
    NoMutualSuite,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("operation not valid in this state: {0}")]
    State(&'static str),
}

/// Alert description codes.
pub mod alert {
    pub const CLOSE_NOTIFY: u8 = 0;
    pub const UNEXPECTED_MESSAGE: u8 = 10;
    pub const BAD_RECORD_MAC: u8 = 20;
    pub const HANDSHAKE_FAILURE: u8 = 40;
    pub const BAD_CERTIFICATE: u8 = 42;
    pub const ILLEGAL_PARAMETER: u8 = 47;
    pub const DECODE_ERROR: u8 = 50;
    pub const DECRYPT_ERROR: u8 = 51;
    pub const INSUFFICIENT_SECURITY: u8 = 71;
    pub const USER_CANCELED: u8 = 90;
    pub const NO_RENEGOTIATION: u8 = 100;
}
