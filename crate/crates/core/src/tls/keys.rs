//! TLS 1.2 style key schedule (P_SHA256) and a simple authenticated record
//! layer keyed from it.

use hmac::{Hmac, Mac};
use sha2::{Digest, Sha256};

use super::TlsError;
use crate::group_math::SharedSecret;

type HmacSha256 = Hmac<Sha256>;

pub const MASTER_SECRET_LEN: usize = 48;
pub const VERIFY_DATA_LEN: usize = 12;
const TAG_LEN: usize = 16;
const SEQ_LEN: usize = 8;

fn hmac(key: &[u8], parts: &[&[u8]]) -> [u8; 32] {
    let mut mac = HmacSha256::new_from_slice(key).expect("HMAC accepts keys of any length");
    for part in parts {
        mac.update(part);
    }
    mac.finalize().into_bytes().into()
}

/// `PRF(secret, label, seed) = P_SHA256(secret, label || seed)` truncated to
/// `len` bytes.
pub fn prf(secret: &[u8], label: &[u8], seed: &[u8], len: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(len + 32);
    let mut a = hmac(secret, &[label, seed]);
    while out.len() < len {
        out.extend_from_slice(&hmac(secret, &[&a, label, seed]));
        a = hmac(secret, &[&a]);
    }
    out.truncate(len);
    out
}

/// Encryption and MAC keys for one direction.
#[derive(Clone, PartialEq, Eq)]
pub struct RecordKey {
    pub enc: [u8; 32],
    pub mac: [u8; 32],
}

impl std::fmt::Debug for RecordKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("RecordKey(..)")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionKeys {
    pub master_secret: [u8; MASTER_SECRET_LEN],
    pub client_write: RecordKey,
    pub server_write: RecordKey,
}

impl SessionKeys {
    pub fn from_master_secret(
        master_secret: [u8; MASTER_SECRET_LEN],
        client_random: &[u8; 32],
        server_random: &[u8; 32],
    ) -> Self {
        let seed = [server_random.as_slice(), client_random.as_slice()].concat();
        let block = prf(&master_secret, b"key expansion", &seed, 128);
        let take = |i: usize| -> [u8; 32] {
            block[i * 32..(i + 1) * 32]
                .try_into()
                .expect("32-byte slice")
        };
        SessionKeys {
            master_secret,
            client_write: RecordKey {
                mac: take(0),
                enc: take(2),
            },
            server_write: RecordKey {
                mac: take(1),
                enc: take(3),
            },
        }
    }
}

/// Master secret from the DH shared value and both randoms, then the record
/// keys from the master secret.
pub fn derive_keys(
    shared: &SharedSecret,
    client_random: &[u8; 32],
    server_random: &[u8; 32],
) -> SessionKeys {
    let seed = [client_random.as_slice(), server_random.as_slice()].concat();
    let ms: [u8; MASTER_SECRET_LEN] = prf(
        &shared.to_bytes(),
        b"master secret",
        &seed,
        MASTER_SECRET_LEN,
    )
    .try_into()
    .expect("prf returns the requested length");
    SessionKeys::from_master_secret(ms, client_random, server_random)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FinishedLabel {
    Client,
    Server,
}

impl FinishedLabel {
    fn bytes(self) -> &'static [u8] {
        match self {
            FinishedLabel::Client => b"client finished",
            FinishedLabel::Server => b"server finished",
        }
    }
}

pub fn transcript_hash<'a>(transcript: impl IntoIterator<Item = &'a Vec<u8>>) -> [u8; 32] {
    let mut h = Sha256::new();
    for m in transcript {
        h.update(m);
    }
    h.finalize().into()
}

pub fn verify_data(
    master_secret: &[u8],
    label: FinishedLabel,
    transcript_digest: &[u8; 32],
) -> [u8; VERIFY_DATA_LEN] {
    prf(
        master_secret,
        label.bytes(),
        transcript_digest,
        VERIFY_DATA_LEN,
    )
    .try_into()
    .expect("prf returns the requested length")
}

/// Record layout: `seq(8) || ciphertext || tag(16)`. The keystream is
/// HMAC-SHA256 in counter mode and the tag is a truncated HMAC over
/// `seq || ciphertext`.
pub fn seal(key: &RecordKey, seq: u64, plaintext: &[u8]) -> Vec<u8> {
    let seq_bytes = seq.to_be_bytes();
    let mut out = Vec::with_capacity(SEQ_LEN + plaintext.len() + TAG_LEN);
    out.extend_from_slice(&seq_bytes);
    out.extend(apply_keystream(&key.enc, &seq_bytes, plaintext));
    let tag = hmac(&key.mac, &[&out]);
    out.extend_from_slice(&tag[..TAG_LEN]);
    out
}

/// Returns `(seq, plaintext)`; fails when the tag does not authenticate.
pub fn open(key: &RecordKey, record: &[u8]) -> Result<(u64, Vec<u8>), TlsError> {
    if record.len() < SEQ_LEN + TAG_LEN {
        return Err(TlsError::RecordAuthentication);
    }
    let (body, tag) = record.split_at(record.len() - TAG_LEN);
    let expected = hmac(&key.mac, &[body]);
    // Not constant time; side channels are out of scope here.
    if expected[..TAG_LEN] != *tag {
        return Err(TlsError::RecordAuthentication);
    }
    let (seq_bytes, ciphertext) = body.split_at(SEQ_LEN);
    let seq = u64::from_be_bytes(seq_bytes.try_into().expect("8-byte slice"));
    Ok((seq, apply_keystream(&key.enc, seq_bytes, ciphertext)))
}

fn apply_keystream(key: &[u8; 32], nonce: &[u8], data: &[u8]) -> Vec<u8> {
    data.chunks(32)
        .enumerate()
        .flat_map(|(i, chunk)| {
            let block = hmac(key, &[nonce, &(i as u32).to_be_bytes()]);
            chunk
                .iter()
                .zip(block)
                .map(|(d, k)| d ^ k)
                .collect::<Vec<_>>()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group_math::{dh_generate_keypair, dh_shared_secret, generate_safe_prime};

    #[test]
    fn prf_matches_reference_vector() {
        // Widely circulated TLS 1.2 PRF-SHA256 test vector.
        let secret = hex::decode("9bbe436ba940f017b17652849a71db35").unwrap();
        let seed = hex::decode("a0ba9f936cda311827a6f796ffd5198c").unwrap();
        let out = prf(&secret, b"test label", &seed, 100);
        assert_eq!(
            hex::encode(&out[..32]),
            "e3f229ba727be17b8d122620557cd453c2aab21d07c3d495329b52d4e61edb5a"
        );
        assert_eq!(out.len(), 100);
    }

    fn keys_for(seed: u64, cr: [u8; 32], sr: [u8; 32]) -> (SessionKeys, SessionKeys) {
        let group = generate_safe_prime(48, 1).unwrap();
        let a = dh_generate_keypair(&group, seed);
        let b = dh_generate_keypair(&group, seed + 1000);
        let sa = dh_shared_secret(&a, b.public_value(), &group).unwrap();
        let sb = dh_shared_secret(&b, a.public_value(), &group).unwrap();
        (derive_keys(&sa, &cr, &sr), derive_keys(&sb, &cr, &sr))
    }

    #[test]
    fn both_sides_agree_and_randoms_matter() {
        for seed in 0..100 {
            let (ka, kb) = keys_for(seed, [1; 32], [2; 32]);
            assert_eq!(ka, kb);
        }
        let (base, _) = keys_for(7, [1; 32], [2; 32]);
        let (other_cr, _) = keys_for(7, [3; 32], [2; 32]);
        let (other_sr, _) = keys_for(7, [1; 32], [3; 32]);
        assert_ne!(base.master_secret, other_cr.master_secret);
        assert_ne!(base.master_secret, other_sr.master_secret);
        assert_ne!(base.client_write, base.server_write);
    }

    #[test]
    fn record_round_trip_and_tamper() {
        let (keys, _) = keys_for(3, [1; 32], [2; 32]);
        let msg = b"GET /inbox HTTP/1.1\r\nHost: mail.example\r\n\r\n";
        let rec = seal(&keys.client_write, 5, msg);
        assert_eq!(open(&keys.client_write, &rec).unwrap(), (5, msg.to_vec()));
        assert!(open(&keys.server_write, &rec).is_err());
        let mut flipped = rec.clone();
        flipped[10] ^= 1;
        assert!(open(&keys.client_write, &flipped).is_err());
        assert!(open(&keys.client_write, &rec[..10]).is_err());
        let (other, _) = keys_for(4, [1; 32], [2; 32]);
        assert!(open(&other.client_write, &rec).is_err());
    }

    #[test]
    fn verify_data_depends_on_transcript_and_key() {
        let (keys, _) = keys_for(3, [1; 32], [2; 32]);
        let t1 = vec![vec![1u8, 2, 3], vec![4u8]];
        let t2 = vec![vec![1u8, 2, 3], vec![5u8]];
        let v1 = verify_data(
            &keys.master_secret,
            FinishedLabel::Client,
            &transcript_hash(&t1),
        );
        assert_eq!(
            v1,
            verify_data(
                &keys.master_secret,
                FinishedLabel::Client,
                &transcript_hash(&t1)
            )
        );
        assert_ne!(
            v1,
            verify_data(
                &keys.master_secret,
                FinishedLabel::Client,
                &transcript_hash(&t2)
            )
        );
        assert_ne!(
            v1,
            verify_data(
                &keys.master_secret,
                FinishedLabel::Server,
                &transcript_hash(&t1)
            )
        );
        let mut wrong = keys.master_secret;
        wrong[0] ^= 1;
        assert_ne!(
            v1,
            verify_data(&wrong, FinishedLabel::Client, &transcript_hash(&t1))
        );
    }
}
