//! Schnorr signatures over a fixed 256-bit safe-prime group, plus the toy
//! certificate authority built on them.

use std::sync::OnceLock;

use num_bigint::BigUint;
use num_traits::{One, Zero};
use sha2::{Digest, Sha256};

use super::codec::Certificate;
use crate::group_math::{parse_hex, random_in_range};

const SIG_P: &str = "8082bb6af60e2b3ffdd631c44d17361f39252c8e07d069efacd93b4aa686ed07";
const SIG_G: u32 = 4;
const SCALAR_LEN: usize = 32;
pub const SIGNATURE_LEN: usize = 2 * SCALAR_LEN;

struct SigGroup {
    p: BigUint,
    q: BigUint,
    g: BigUint,
}

fn sig_group() -> &'static SigGroup {
    static GROUP: OnceLock<SigGroup> = OnceLock::new();
    GROUP.get_or_init(|| {
        let p = parse_hex(SIG_P).expect("constant parses");
        let q = (&p - 1u32) >> 1;
        SigGroup {
            p,
            q,
            g: BigUint::from(SIG_G),
        }
    })
}

fn hash_to_scalar(parts: &[&[u8]]) -> BigUint {
    let mut h = Sha256::new();
    for part in parts {
        h.update((part.len() as u32).to_be_bytes());
        h.update(part);
    }
    BigUint::from_bytes_be(&h.finalize()) % &sig_group().q
}

fn fixed_bytes(n: &BigUint) -> [u8; SCALAR_LEN] {
    let raw = n.to_bytes_be();
    let mut out = [0u8; SCALAR_LEN];
    out[SCALAR_LEN - raw.len()..].copy_from_slice(&raw);
    out
}

#[derive(Clone, PartialEq, Eq)]
pub struct SigningKey {
    x: BigUint,
    y: BigUint,
}

impl std::fmt::Debug for SigningKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SigningKey")
            .field("public", &self.verifying_key())
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifyingKey {
    y: BigUint,
}

impl SigningKey {
    pub fn from_seed(seed: u64) -> Self {
        use rand::SeedableRng;
        let grp = sig_group();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let x = random_in_range(&mut rng, &BigUint::one(), &(&grp.q - 1u32));
        let y = grp.g.modpow(&x, &grp.p);
        SigningKey { x, y }
    }

    pub fn verifying_key(&self) -> VerifyingKey {
        VerifyingKey { y: self.y.clone() }
    }

    /// Deterministic nonce derived from the secret and the message.
    pub fn sign(&self, msg: &[u8]) -> Vec<u8> {
        let grp = sig_group();
        let mut k = hash_to_scalar(&[b"nonce", &fixed_bytes(&self.x), msg]);
        if k.is_zero() {
            k = BigUint::one();
        }
        let r = grp.g.modpow(&k, &grp.p);
        let e = hash_to_scalar(&[&fixed_bytes(&r), &fixed_bytes(&self.y), msg]);
        let s = (k + &self.x * &e) % &grp.q;
        let mut out = Vec::with_capacity(SIGNATURE_LEN);
        out.extend_from_slice(&fixed_bytes(&e));
        out.extend_from_slice(&fixed_bytes(&s));
        out
    }
}

impl VerifyingKey {
    pub fn to_bytes(&self) -> Vec<u8> {
        fixed_bytes(&self.y).to_vec()
    }

    /// Accepts only elements of the prime-order subgroup.
    pub fn from_bytes(bytes: &[u8]) -> Option<Self> {
        if bytes.len() != SCALAR_LEN {
            return None;
        }
        let grp = sig_group();
        let y = BigUint::from_bytes_be(bytes);
        if y <= BigUint::one() || y >= grp.p || !y.modpow(&grp.q, &grp.p).is_one() {
            return None;
        }
        Some(VerifyingKey { y })
    }

    pub fn verify(&self, msg: &[u8], signature: &[u8]) -> bool {
        if signature.len() != SIGNATURE_LEN {
            return false;
        }
        let grp = sig_group();
        let e = BigUint::from_bytes_be(&signature[..SCALAR_LEN]);
        let s = BigUint::from_bytes_be(&signature[SCALAR_LEN..]);
        if e >= grp.q || s >= grp.q {
            return false;
        }
        let r = grp.g.modpow(&s, &grp.p) * self.y.modpow(&(&grp.q - &e), &grp.p) % &grp.p;
        hash_to_scalar(&[&fixed_bytes(&r), &fixed_bytes(&self.y), msg]) == e
    }
}

fn certificate_body(identity: &str, public_key: &[u8]) -> Vec<u8> {
    let mut body = b"toy-cert".to_vec();
    body.extend_from_slice(&(identity.len() as u32).to_be_bytes());
    body.extend_from_slice(identity.as_bytes());
    body.extend_from_slice(public_key);
    body
}

/// Issues certificates binding an identity to a verification key.
#[derive(Debug, Clone)]
pub struct CertificateAuthority {
    key: SigningKey,
}

impl CertificateAuthority {
    pub fn from_seed(seed: u64) -> Self {
        CertificateAuthority {
            key: SigningKey::from_seed(seed),
        }
    }

    pub fn trust_anchor(&self) -> VerifyingKey {
        self.key.verifying_key()
    }

    pub fn issue(&self, identity: &str, subject: &VerifyingKey) -> Certificate {
        let public_key = subject.to_bytes();
        let ca_signature = self.key.sign(&certificate_body(identity, &public_key));
        Certificate {
            identity: identity.to_string(),
            public_key,
            ca_signature,
        }
    }
}

/// Returns the subject key when the certificate names `identity` and carries
/// a valid signature from `anchor`.
pub fn verify_certificate(
    cert: &Certificate,
    anchor: &VerifyingKey,
    identity: &str,
) -> Option<VerifyingKey> {
    if cert.identity != identity {
        return None;
    }
    if !anchor.verify(
        &certificate_body(&cert.identity, &cert.public_key),
        &cert.ca_signature,
    ) {
        return None;
    }
    VerifyingKey::from_bytes(&cert.public_key)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group_math::{is_probable_prime, is_safe_prime};

    #[test]
    fn fixed_group_is_sound() {
        let grp = sig_group();
        assert_eq!(grp.p.bits(), 256);
        assert!(is_safe_prime(&grp.p));
        assert!(is_probable_prime(&grp.q, 40));
        assert!(grp.g.modpow(&grp.q, &grp.p).is_one());
    }

    #[test]
    fn sign_verify_and_tamper() {
        let key = SigningKey::from_seed(1);
        let vk = key.verifying_key();
        let msg = b"client_random || server_random || params";
        let sig = key.sign(msg);
        assert!(vk.verify(msg, &sig));
        assert_eq!(sig, key.sign(msg));
        for i in 0..msg.len() {
            let mut m = msg.to_vec();
            m[i] ^= 0x01;
            assert!(!vk.verify(&m, &sig), "byte {i}");
        }
        for i in 0..sig.len() {
            let mut s = sig.clone();
            s[i] ^= 0x80;
            assert!(!vk.verify(msg, &s), "sig byte {i}");
        }
        assert!(!SigningKey::from_seed(2).verifying_key().verify(msg, &sig));
        assert!(!vk.verify(msg, &sig[..63]));
    }

    #[test]
    fn key_bytes_round_trip_and_reject_outside_subgroup() {
        let vk = SigningKey::from_seed(9).verifying_key();
        assert_eq!(VerifyingKey::from_bytes(&vk.to_bytes()), Some(vk));
        // p-1 has order 2.
        let p_minus_1 = fixed_bytes(&(&sig_group().p - 1u32));
        assert!(VerifyingKey::from_bytes(&p_minus_1).is_none());
        assert!(VerifyingKey::from_bytes(&[1u8; 31]).is_none());
    }

    #[test]
    fn certificates() {
        let ca = CertificateAuthority::from_seed(100);
        let server = SigningKey::from_seed(5);
        let cert = ca.issue("server.example", &server.verifying_key());
        assert_eq!(
            verify_certificate(&cert, &ca.trust_anchor(), "server.example"),
            Some(server.verifying_key())
        );
        assert!(verify_certificate(&cert, &ca.trust_anchor(), "other.example").is_none());
        let rogue = CertificateAuthority::from_seed(101);
        assert!(verify_certificate(&cert, &rogue.trust_anchor(), "server.example").is_none());
        let mut swapped = cert.clone();
        swapped.public_key = SigningKey::from_seed(6).verifying_key().to_bytes();
        assert!(verify_certificate(&swapped, &ca.trust_anchor(), "server.example").is_none());
    }
}
