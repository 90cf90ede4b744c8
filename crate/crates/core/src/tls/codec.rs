//! Wire format for the simplified handshake.
//!
//! Every message is `type(1) || length(3, big-endian) || body`. Bodies follow
//! the TLS 1.2 presentation language with the usual 1-, 2- and 3-byte length
//! prefixes. DH values keep whatever leading zero bytes they were encoded
//! with; nothing here normalizes them.

use std::fmt;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use super::TlsError;

pub const TLS12_VERSION: u16 = 0x0303;
const MAX_U24: usize = (1 << 24) - 1;

/// Registered cipher suites. Only these ids decode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CipherSuiteId {
    /// TLS_DHE_RSA_WITH_AES_128_CBC_SHA
    DheStrong,
    /// TLS_DHE_RSA_EXPORT_WITH_DES40_CBC_SHA
    DheExport,
}

impl CipherSuiteId {
    pub const ALL: [CipherSuiteId; 2] = [CipherSuiteId::DheStrong, CipherSuiteId::DheExport];

    pub fn id(self) -> u16 {
        match self {
            CipherSuiteId::DheStrong => 0x0033,
            CipherSuiteId::DheExport => 0x0014,
        }
    }

    pub fn from_id(id: u16) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.id() == id)
    }

    /// Server preference rank; higher is stronger.
    pub fn rank(self) -> u8 {
        match self {
            CipherSuiteId::DheStrong => 2,
            CipherSuiteId::DheExport => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CipherSuiteId::DheStrong => "DHE_STRONG",
            CipherSuiteId::DheExport => "DHE_EXPORT",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name.trim().to_ascii_uppercase().as_str() {
            "DHE_STRONG" | "STRONG" => Some(CipherSuiteId::DheStrong),
            "DHE_EXPORT" | "EXPORT" => Some(CipherSuiteId::DheExport),
            _ => None,
        }
    }
}

impl fmt::Display for CipherSuiteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClientHello {
    pub version: u16,
    pub random: [u8; 32],
    pub session_id: Vec<u8>,
    pub suites: Vec<CipherSuiteId>,
    pub compression_methods: Vec<u8>,
    /// Opaque extension block; `None` when absent from the encoding.
    pub extensions: Option<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServerHello {
    pub version: u16,
    pub random: [u8; 32],
    pub session_id: Vec<u8>,
    pub suite: CipherSuiteId,
    pub compression_method: u8,
    pub extensions: Option<Vec<u8>>,
}

/// Toy certificate: an identity and verification key signed by a CA key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Certificate {
    pub identity: String,
    pub public_key: Vec<u8>,
    pub ca_signature: Vec<u8>,
}

/// `p`, `g` and `Ys` exactly as encoded on the wire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServerDhParams {
    pub p: Vec<u8>,
    pub g: Vec<u8>,
    pub ys: Vec<u8>,
}

impl ServerDhParams {
    /// Minimal big-endian encodings of the three values.
    pub fn from_values(p: &BigUint, g: &BigUint, ys: &BigUint) -> Self {
        ServerDhParams {
            p: p.to_bytes_be(),
            g: g.to_bytes_be(),
            ys: ys.to_bytes_be(),
        }
    }

    pub fn p_value(&self) -> BigUint {
        BigUint::from_bytes_be(&self.p)
    }

    pub fn g_value(&self) -> BigUint {
        BigUint::from_bytes_be(&self.g)
    }

    pub fn ys_value(&self) -> BigUint {
        BigUint::from_bytes_be(&self.ys)
    }

    /// Left-pads the encoding of `p` with zero bytes up to `len` bytes.
    pub fn pad_p_to(mut self, len: usize) -> Self {
        if self.p.len() < len {
            let mut padded = vec![0u8; len - self.p.len()];
            padded.extend_from_slice(&self.p);
            self.p = padded;
        }
        self
    }

    /// `len_p(2) || p || len_g(2) || g || len_Y(2) || Y`
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.vec16(&self.p);
        w.vec16(&self.g);
        w.vec16(&self.ys);
        w.buf
    }

    fn read(r: &mut Reader<'_>) -> Result<Self, TlsError> {
        let p = r.vec16_nonempty("dh_p")?;
        let g = r.vec16_nonempty("dh_g")?;
        let ys = r.vec16_nonempty("dh_Ys")?;
        Ok(ServerDhParams { p, g, ys })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServerKeyExchange {
    pub params: ServerDhParams,
    pub signature: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HandshakeMessage {
    ClientHello(ClientHello),
    ServerHello(ServerHello),
    ServerCertificate(Certificate),
    ServerKeyExchange(ServerKeyExchange),
    ServerHelloDone,
    ClientKeyExchange {
        public_value: Vec<u8>,
    },
    /// Sealed 12-byte verify_data.
    Finished {
        sealed: Vec<u8>,
    },
    WarningAlert {
        code: u8,
    },
    FatalAlert {
        code: u8,
    },
    ApplicationData {
        record: Vec<u8>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MessageKind {
    ClientHello,
    ServerHello,
    ServerCertificate,
    ServerKeyExchange,
    ServerHelloDone,
    ClientKeyExchange,
    Finished,
    WarningAlert,
    FatalAlert,
    ApplicationData,
}

impl MessageKind {
    pub fn type_byte(self) -> u8 {
        match self {
            MessageKind::ClientHello => 1,
            MessageKind::ServerHello => 2,
            MessageKind::ServerCertificate => 11,
            MessageKind::ServerKeyExchange => 12,
            MessageKind::ServerHelloDone => 14,
            MessageKind::ClientKeyExchange => 16,
            MessageKind::Finished => 20,
            MessageKind::WarningAlert | MessageKind::FatalAlert => 21,
            MessageKind::ApplicationData => 23,
        }
    }

    /// Handshake messages enter the Finished transcript; alerts and
    /// application data do not.
    pub fn is_handshake(self) -> bool {
        !matches!(
            self,
            MessageKind::WarningAlert | MessageKind::FatalAlert | MessageKind::ApplicationData
        )
    }
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

const ALERT_WARNING: u8 = 1;
const ALERT_FATAL: u8 = 2;

impl HandshakeMessage {
    pub fn kind(&self) -> MessageKind {
        match self {
            HandshakeMessage::ClientHello(_) => MessageKind::ClientHello,
            HandshakeMessage::ServerHello(_) => MessageKind::ServerHello,
            HandshakeMessage::ServerCertificate(_) => MessageKind::ServerCertificate,
            HandshakeMessage::ServerKeyExchange(_) => MessageKind::ServerKeyExchange,
            HandshakeMessage::ServerHelloDone => MessageKind::ServerHelloDone,
            HandshakeMessage::ClientKeyExchange { .. } => MessageKind::ClientKeyExchange,
            HandshakeMessage::Finished { .. } => MessageKind::Finished,
            HandshakeMessage::WarningAlert { .. } => MessageKind::WarningAlert,
            HandshakeMessage::FatalAlert { .. } => MessageKind::FatalAlert,
            HandshakeMessage::ApplicationData { .. } => MessageKind::ApplicationData,
        }
    }
}

pub fn encode_message(m: &HandshakeMessage) -> Result<Vec<u8>, TlsError> {
    let mut w = Writer::default();
    match m {
        HandshakeMessage::ClientHello(ch) => {
            w.u16(ch.version);
            w.bytes(&ch.random);
            w.vec8(&ch.session_id);
            let suites: Vec<u8> = ch
                .suites
                .iter()
                .flat_map(|s| s.id().to_be_bytes())
                .collect();
            w.vec16(&suites);
            w.vec8(&ch.compression_methods);
            if let Some(ext) = &ch.extensions {
                w.vec16(ext);
            }
        }
        HandshakeMessage::ServerHello(sh) => {
            w.u16(sh.version);
            w.bytes(&sh.random);
            w.vec8(&sh.session_id);
            w.u16(sh.suite.id());
            w.u8(sh.compression_method);
            if let Some(ext) = &sh.extensions {
                w.vec16(ext);
            }
        }
        HandshakeMessage::ServerCertificate(c) => {
            w.vec16(c.identity.as_bytes());
            w.vec16(&c.public_key);
            w.vec16(&c.ca_signature);
        }
        HandshakeMessage::ServerKeyExchange(ske) => {
            w.bytes(&ske.params.encode());
            w.vec16(&ske.signature);
        }
        HandshakeMessage::ServerHelloDone => {}
        HandshakeMessage::ClientKeyExchange { public_value } => w.vec16(public_value),
        HandshakeMessage::Finished { sealed } => w.bytes(sealed),
        HandshakeMessage::WarningAlert { code } => {
            w.u8(ALERT_WARNING);
            w.u8(*code);
        }
        HandshakeMessage::FatalAlert { code } => {
            w.u8(ALERT_FATAL);
            w.u8(*code);
        }
        HandshakeMessage::ApplicationData { record } => w.bytes(record),
    }
    if w.overflow {
        return Err(TlsError::Encode(
            "a length-prefixed field exceeds its maximum length",
        ));
    }
    validate_lengths(m)?;
    let body = w.buf;
    if body.len() > MAX_U24 {
        return Err(TlsError::Encode("message body exceeds 2^24-1 bytes"));
    }
    let mut out = Vec::with_capacity(body.len() + 4);
    out.push(m.kind().type_byte());
    out.extend_from_slice(&(body.len() as u32).to_be_bytes()[1..]);
    out.extend_from_slice(&body);
    Ok(out)
}

/// Range checks that mirror what the decoder enforces, so every encodable
/// message decodes back.
fn validate_lengths(m: &HandshakeMessage) -> Result<(), TlsError> {
    let bad = |what| Err(TlsError::Encode(what));
    match m {
        HandshakeMessage::ClientHello(ch) => {
            if ch.session_id.len() > 32 {
                return bad("session_id longer than 32 bytes");
            }
            if ch.suites.is_empty() {
                return bad("cipher_suites must not be empty");
            }
            if ch.compression_methods.is_empty() {
                return bad("compression_methods must not be empty");
            }
        }
        HandshakeMessage::ServerHello(sh) => {
            if sh.session_id.len() > 32 {
                return bad("session_id longer than 32 bytes");
            }
        }
        HandshakeMessage::ServerKeyExchange(ske) => {
            let p = &ske.params;
            if p.p.is_empty() || p.g.is_empty() || p.ys.is_empty() {
                return bad("DH values must not be empty");
            }
        }
        HandshakeMessage::ClientKeyExchange { public_value } if public_value.is_empty() => {
            return bad("DH value must not be empty");
        }
        _ => {}
    }
    Ok(())
}

pub fn decode_message(b: &[u8]) -> Result<HandshakeMessage, TlsError> {
    if b.len() < 4 {
        return Err(TlsError::Decode("truncated header".into()));
    }
    let declared = u32::from_be_bytes([0, b[1], b[2], b[3]]) as usize;
    let body = &b[4..];
    if declared > body.len() {
        return Err(TlsError::Decode(format!(
            "length {declared} overruns {} available bytes",
            body.len()
        )));
    }
    if declared < body.len() {
        return Err(TlsError::Decode("trailing bytes after message".into()));
    }
    let mut r = Reader::new(body);
    let msg = match b[0] {
        1 => {
            let version = r.u16()?;
            let random = r.array32()?;
            let session_id = r.vec8_max("session_id", 32)?;
            let raw = r.vec16("cipher_suites")?;
            if raw.is_empty() || raw.len() % 2 != 0 {
                return Err(TlsError::Decode(
                    "cipher_suites length must be a positive multiple of 2".into(),
                ));
            }
            let suites = raw
                .chunks_exact(2)
                .map(|c| {
                    let id = u16::from_be_bytes([c[0], c[1]]);
                    CipherSuiteId::from_id(id).ok_or(TlsError::Decode(format!(
                        "unregistered cipher suite 0x{id:04x}"
                    )))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let compression_methods = r.vec8("compression_methods")?;
            if compression_methods.is_empty() {
                return Err(TlsError::Decode(
                    "compression_methods must not be empty".into(),
                ));
            }
            let extensions = if r.is_empty() {
                None
            } else {
                Some(r.vec16("extensions")?)
            };
            HandshakeMessage::ClientHello(ClientHello {
                version,
                random,
                session_id,
                suites,
                compression_methods,
                extensions,
            })
        }
        2 => {
            let version = r.u16()?;
            let random = r.array32()?;
            let session_id = r.vec8_max("session_id", 32)?;
            let id = r.u16()?;
            let suite = CipherSuiteId::from_id(id).ok_or(TlsError::Decode(format!(
                "unregistered cipher suite 0x{id:04x}"
            )))?;
            let compression_method = r.u8()?;
            let extensions = if r.is_empty() {
                None
            } else {
                Some(r.vec16("extensions")?)
            };
            HandshakeMessage::ServerHello(ServerHello {
                version,
                random,
                session_id,
                suite,
                compression_method,
                extensions,
            })
        }
        11 => {
            let identity = String::from_utf8(r.vec16("identity")?)
                .map_err(|_| TlsError::Decode("identity is not UTF-8".into()))?;
            let public_key = r.vec16("public_key")?;
            let ca_signature = r.vec16("ca_signature")?;
            HandshakeMessage::ServerCertificate(Certificate {
                identity,
                public_key,
                ca_signature,
            })
        }
        12 => {
            let params = ServerDhParams::read(&mut r)?;
            let signature = r.vec16("signature")?;
            HandshakeMessage::ServerKeyExchange(ServerKeyExchange { params, signature })
        }
        14 => HandshakeMessage::ServerHelloDone,
        16 => HandshakeMessage::ClientKeyExchange {
            public_value: r.vec16_nonempty("dh_Yc")?,
        },
        20 => HandshakeMessage::Finished {
            sealed: r.rest().to_vec(),
        },
        21 => {
            let level = r.u8()?;
            let code = r.u8()?;
            match level {
                ALERT_WARNING => HandshakeMessage::WarningAlert { code },
                ALERT_FATAL => HandshakeMessage::FatalAlert { code },
                other => return Err(TlsError::Decode(format!("unknown alert level {other}"))),
            }
        }
        23 => HandshakeMessage::ApplicationData {
            record: r.rest().to_vec(),
        },
        other => return Err(TlsError::Decode(format!("unknown message type {other}"))),
    };
    if !r.is_empty() {
        return Err(TlsError::Decode("unparsed bytes at end of body".into()));
    }
    Ok(msg)
}

#[derive(Default)]
struct Writer {
    buf: Vec<u8>,
    overflow: bool,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    fn vec8(&mut self, b: &[u8]) {
        if b.len() > u8::MAX as usize {
            self.overflow = true;
        }
        self.u8(b.len() as u8);
        self.bytes(b);
    }

    fn vec16(&mut self, b: &[u8]) {
        if b.len() > u16::MAX as usize {
            self.overflow = true;
        }
        self.u16(b.len() as u16);
        self.bytes(b);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], TlsError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let out = &self.buf[self.pos..end];
                self.pos = end;
                Ok(out)
            }
            None => Err(TlsError::Decode(format!("truncated {what}"))),
        }
    }

    fn u8(&mut self) -> Result<u8, TlsError> {
        Ok(self.take(1, "u8")?[0])
    }

    fn u16(&mut self) -> Result<u16, TlsError> {
        let b = self.take(2, "u16")?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn array32(&mut self) -> Result<[u8; 32], TlsError> {
        let mut out = [0u8; 32];
        out.copy_from_slice(self.take(32, "random")?);
        Ok(out)
    }

    fn vec8(&mut self, what: &str) -> Result<Vec<u8>, TlsError> {
        let n = self.u8()? as usize;
        Ok(self.take(n, what)?.to_vec())
    }

    fn vec8_max(&mut self, what: &str, max: usize) -> Result<Vec<u8>, TlsError> {
        let v = self.vec8(what)?;
        if v.len() > max {
            return Err(TlsError::Decode(format!("{what} longer than {max} bytes")));
        }
        Ok(v)
    }

    fn vec16(&mut self, what: &str) -> Result<Vec<u8>, TlsError> {
        let n = self.u16()? as usize;
        Ok(self.take(n, what)?.to_vec())
    }

    fn vec16_nonempty(&mut self, what: &str) -> Result<Vec<u8>, TlsError> {
        let v = self.vec16(what)?;
        if v.is_empty() {
            return Err(TlsError::Decode(format!("{what} must not be empty")));
        }
        Ok(v)
    }

    fn rest(&mut self) -> &'a [u8] {
        let out = &self.buf[self.pos..];
        self.pos = self.buf.len();
        out
    }

    fn is_empty(&self) -> bool {
        self.pos >= self.buf.len()
    }
}
