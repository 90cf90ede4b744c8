#![allow(dead_code)]

use logjam_core::tls::{
    Certificate, CipherSuiteId, ClientHello, HandshakeMessage, ServerDhParams, ServerHello,
    ServerKeyExchange,
};
use rand::Rng;

fn bytes<R: Rng>(rng: &mut R, min: usize, max: usize) -> Vec<u8> {
    let n = rng.gen_range(min..=max);
    let mut v = vec![0u8; n];
    rng.fill(v.as_mut_slice());
    v
}

fn suite<R: Rng>(rng: &mut R) -> CipherSuiteId {
    CipherSuiteId::ALL[rng.gen_range(0..CipherSuiteId::ALL.len())]
}

/// Any structurally valid message.
pub fn random_message<R: Rng>(rng: &mut R) -> HandshakeMessage {
    match rng.gen_range(0..10) {
        0 => HandshakeMessage::ClientHello(ClientHello {
            version: rng.gen(),
            random: rng.gen(),
            session_id: bytes(rng, 0, 32),
            suites: (0..rng.gen_range(1..6)).map(|_| suite(rng)).collect(),
            compression_methods: bytes(rng, 1, 4),
            extensions: rng.gen_bool(0.5).then(|| bytes(rng, 0, 40)),
        }),
        1 => HandshakeMessage::ServerHello(ServerHello {
            version: rng.gen(),
            random: rng.gen(),
            session_id: bytes(rng, 0, 32),
            suite: suite(rng),
            compression_method: rng.gen(),
            extensions: rng.gen_bool(0.5).then(|| bytes(rng, 0, 40)),
        }),
        2 => {
            let len = rng.gen_range(0..24);
            let identity: String = (0..len).map(|_| rng.gen_range('a'..='z')).collect();
            HandshakeMessage::ServerCertificate(Certificate {
                identity,
                public_key: bytes(rng, 0, 40),
                ca_signature: bytes(rng, 0, 70),
            })
        }
        3 => HandshakeMessage::ServerKeyExchange(ServerKeyExchange {
            params: ServerDhParams {
                p: bytes(rng, 1, 20),
                g: bytes(rng, 1, 4),
                ys: bytes(rng, 1, 20),
            },
            signature: bytes(rng, 0, 70),
        }),
        4 => HandshakeMessage::ServerHelloDone,
        5 => HandshakeMessage::ClientKeyExchange {
            public_value: bytes(rng, 1, 20),
        },
        6 => HandshakeMessage::Finished {
            sealed: bytes(rng, 0, 40),
        },
        7 => HandshakeMessage::WarningAlert { code: rng.gen() },
        8 => HandshakeMessage::FatalAlert { code: rng.gen() },
        _ => HandshakeMessage::ApplicationData {
            record: bytes(rng, 0, 80),
        },
    }
}

/// Flips, inserts, deletes or truncates bytes of a valid encoding.
pub fn mutate<R: Rng>(rng: &mut R, mut b: Vec<u8>) -> Vec<u8> {
    for _ in 0..rng.gen_range(1..4) {
        match rng.gen_range(0..4) {
            0 if !b.is_empty() => {
                let i = rng.gen_range(0..b.len());
                b[i] ^= 1 << rng.gen_range(0..8);
            }
            1 => {
                let i = rng.gen_range(0..=b.len());
                b.insert(i, rng.gen());
            }
            2 if !b.is_empty() => {
                let i = rng.gen_range(0..b.len());
                b.remove(i);
            }
            _ => {
                let n = rng.gen_range(0..=b.len());
                b.truncate(n);
            }
        }
    }
    b
}

pub mod fixture {
    use std::sync::OnceLock;

    use logjam_core::group_math::{generate_safe_prime, DhGroup};
    use logjam_core::tls::{
        CertificateAuthority, CipherSuiteId, ClientPolicy, ServerPolicy, SigningKey,
    };

    pub const IDENTITY: &str = "server.example";

    pub fn export_group() -> &'static DhGroup {
        static G: OnceLock<DhGroup> = OnceLock::new();
        G.get_or_init(|| generate_safe_prime(48, 48).unwrap())
    }

    pub fn strong_group() -> &'static DhGroup {
        static G: OnceLock<DhGroup> = OnceLock::new();
        G.get_or_init(|| generate_safe_prime(96, 96).unwrap())
    }

    pub fn ca() -> CertificateAuthority {
        CertificateAuthority::from_seed(1)
    }

    pub fn client_policy(suites: &[CipherSuiteId]) -> ClientPolicy {
        ClientPolicy {
            offered_suites: suites.to_vec(),
            min_prime_bits: 0,
            handshake_timeout_ms: 5000,
            alert_resets_timer: true,
            false_start: false,
            signed_suite_mode: false,
            trust_anchor: ca().trust_anchor(),
            server_identity: IDENTITY.to_string(),
        }
    }

    pub fn server_policy(suites: &[CipherSuiteId]) -> ServerPolicy {
        let signing_key = SigningKey::from_seed(2);
        let certificate = ca().issue(IDENTITY, &signing_key.verifying_key());
        ServerPolicy {
            enabled_suites: suites.to_vec(),
            strong_group: strong_group().clone(),
            export_group: export_group().clone(),
            fresh_group_per_install: false,
            signed_suite_mode: false,
            pad_p_to: None,
            signing_key,
            certificate,
        }
    }
}
