//! Modular arithmetic, primality, safe-prime generation and the finite-field
//! Diffie-Hellman exchange.
//!
//! All integers are [`BigUint`]. Randomness is always an explicit seed fed to
//! a ChaCha stream so every operation is reproducible.

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Miller-Rabin rounds used by every primality check in this crate.
/// 40 rounds bounds the false-positive rate by 4^-40 = 2^-80.
pub const DEFAULT_MR_ROUNDS: u32 = 40;

const SMALL_PRIME_LIMIT: u32 = 1 << 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GroupError {
    #[error("modulus must be at least 2")]
    ModulusTooSmall,
    #[error("requested {bits}-bit prime; at least 16 bits are required")]
    BitsTooSmall { bits: u64 },
    #[error("modulus is not prime")]
    NotPrime,
    #[error("generator {0}")]
    BadGenerator(&'static str),
    #[error("declared order factorization is inconsistent: {0}")]
    BadOrderFactorization(&'static str),
    #[error("invalid public value: must satisfy 1 < y < p-1")]
    InvalidPublicValue,
    #[error("secret exponent outside [1, q-1]")]
    InvalidSecret,
    #[error("encoding does not decode to the stated value")]
    EncodingMismatch,
    #[error("not a hexadecimal integer: {0:?}")]
    BadHex(String),
}

/// Modular exponentiation by square-and-multiply.
pub fn mod_exp(
    base: &BigUint,
    exponent: &BigUint,
    modulus: &BigUint,
) -> Result<BigUint, GroupError> {
    if modulus < &BigUint::from(2u32) {
        return Err(GroupError::ModulusTooSmall);
    }
    Ok(base.modpow(exponent, modulus))
}

fn small_primes_below(limit: u32) -> Vec<u32> {
    let n = limit as usize;
    let mut composite = vec![false; n];
    let mut out = Vec::new();
    for i in 2..n {
        if !composite[i] {
            out.push(i as u32);
            let mut j = i * i;
            while j < n {
                composite[j] = true;
                j += i;
            }
        }
    }
    out
}

fn small_primes() -> &'static [u32] {
    static PRIMES: std::sync::OnceLock<Vec<u32>> = std::sync::OnceLock::new();
    PRIMES.get_or_init(|| small_primes_below(SMALL_PRIME_LIMIT))
}

fn trial_division_is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for &p in small_primes() {
        let p = p as u64;
        if p * p > n {
            return true;
        }
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    true
}

/// Uniform integer in `[0, bound)` by rejection sampling on whole bytes.
pub(crate) fn random_below<R: RngCore>(rng: &mut R, bound: &BigUint) -> BigUint {
    assert!(!bound.is_zero(), "empty range");
    let bits = bound.bits();
    let nbytes = bits.div_ceil(8) as usize;
    let excess = (nbytes as u64) * 8 - bits;
    let mut buf = vec![0u8; nbytes];
    loop {
        rng.fill_bytes(&mut buf);
        buf[0] &= 0xffu8 >> excess;
        let candidate = BigUint::from_bytes_be(&buf);
        if &candidate < bound {
            return candidate;
        }
    }
}

/// Uniform integer in `[low, high]`.
pub(crate) fn random_in_range<R: RngCore>(rng: &mut R, low: &BigUint, high: &BigUint) -> BigUint {
    low + random_below(rng, &(high - low + 1u32))
}

fn miller_rabin_round(
    n: &BigUint,
    n_minus_one: &BigUint,
    d: &BigUint,
    s: u64,
    witness: &BigUint,
) -> bool {
    let mut x = witness.modpow(d, n);
    if x.is_one() || &x == n_minus_one {
        return true;
    }
    for _ in 1..s {
        x = (&x * &x) % n;
        if &x == n_minus_one {
            return true;
        }
        if x.is_one() {
            return false;
        }
    }
    false
}

/// Probabilistic primality test.
///
/// Values below 2^16 are decided exactly by trial division. Larger values are
/// screened by trial division and then run through `rounds` Miller-Rabin
/// rounds with witnesses drawn from a stream seeded by `n` itself, so the
/// answer is a pure function of the inputs.
pub fn is_probable_prime(n: &BigUint, rounds: u32) -> bool {
    if let Some(small) = n.to_u64() {
        if small < SMALL_PRIME_LIMIT as u64 {
            return trial_division_is_prime(small);
        }
    }
    for &p in small_primes().iter().take(256) {
        if (n % p).is_zero() {
            return false;
        }
    }
    let n_minus_one = n - 1u32;
    let s = n_minus_one.trailing_zeros().unwrap_or(0);
    let d = &n_minus_one >> s;
    let mut seed = [0u8; 32];
    let digits = n.to_bytes_le();
    for (i, b) in digits.iter().enumerate() {
        seed[i % 32] ^= b.rotate_left((i / 32) as u32);
    }
    let mut rng = ChaCha8Rng::from_seed(seed);
    let two = BigUint::from(2u32);
    let high = n - 2u32;
    for _ in 0..rounds {
        let a = random_in_range(&mut rng, &two, &high);
        if !miller_rabin_round(n, &n_minus_one, &d, s, &a) {
            return false;
        }
    }
    true
}

/// True when `p` and `(p-1)/2` are both (probable) primes.
pub fn is_safe_prime(p: &BigUint) -> bool {
    if p < &BigUint::from(5u32) || p.is_even() {
        return false;
    }
    let q: BigUint = (p - 1u32) >> 1;
    is_probable_prime(&q, DEFAULT_MR_ROUNDS) && is_probable_prime(p, DEFAULT_MR_ROUNDS)
}

/// Bit length of `n` by value (position of the highest set bit).
pub fn magnitude_bits(n: &BigUint) -> u64 {
    n.bits()
}

/// Parameters of a finite-field Diffie-Hellman group: prime `p`, generator
/// `g` and the order `q` of the subgroup `g` generates.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DhGroup {
    p: BigUint,
    g: BigUint,
    q: BigUint,
    order_factors: Option<Vec<(BigUint, u32)>>,
}

impl DhGroup {
    /// Validates `p` prime, `2 <= g <= p-2` and `g^q = 1`. When `q` is prime
    /// this pins the order of `g` to exactly `q`.
    pub fn new(p: BigUint, g: BigUint, q: BigUint) -> Result<Self, GroupError> {
        Self::check_common(&p, &g, &q)?;
        let order_factors = if is_probable_prime(&q, DEFAULT_MR_ROUNDS) {
            Some(vec![(q.clone(), 1)])
        } else {
            None
        };
        Ok(DhGroup {
            p,
            g,
            q,
            order_factors,
        })
    }

    /// Group over a safe prime with `q = (p-1)/2`.
    pub fn from_safe_prime(p: BigUint, g: BigUint) -> Result<Self, GroupError> {
        if !is_safe_prime(&p) {
            return Err(GroupError::NotPrime);
        }
        let q: BigUint = (&p - 1u32) >> 1;
        Self::new(p, g, q)
    }

    /// Group whose generator order is given by its full factorization. Checks
    /// every factor is prime and `g^(q/r) != 1` for each prime factor `r`.
    pub fn with_order_factorization(
        p: BigUint,
        g: BigUint,
        factors: Vec<(BigUint, u32)>,
    ) -> Result<Self, GroupError> {
        if factors.is_empty() {
            return Err(GroupError::BadOrderFactorization("empty"));
        }
        let mut q = BigUint::one();
        for (r, e) in &factors {
            if *e == 0 || !is_probable_prime(r, DEFAULT_MR_ROUNDS) {
                return Err(GroupError::BadOrderFactorization(
                    "factor is not a prime power",
                ));
            }
            q *= r.pow(*e);
        }
        Self::check_common(&p, &g, &q)?;
        for (r, _) in &factors {
            if g.modpow(&(&q / r), &p).is_one() {
                return Err(GroupError::BadGenerator(
                    "order is a proper divisor of the declared order",
                ));
            }
        }
        Ok(DhGroup {
            p,
            g,
            q,
            order_factors: Some(factors),
        })
    }

    /// Accepts parameters as received from a peer without primality checks;
    /// the subgroup order is assumed to be `(p-1)/2`.
    pub(crate) fn assume_safe_prime(p: BigUint, g: BigUint) -> Self {
        let q = if p > BigUint::from(3u32) {
            (&p - 1u32) >> 1
        } else {
            BigUint::one()
        };
        DhGroup {
            p,
            g,
            q,
            order_factors: None,
        }
    }

    fn check_common(p: &BigUint, g: &BigUint, q: &BigUint) -> Result<(), GroupError> {
        if p < &BigUint::from(5u32) || !is_probable_prime(p, DEFAULT_MR_ROUNDS) {
            return Err(GroupError::NotPrime);
        }
        if g < &BigUint::from(2u32) || g > &(p - 2u32) {
            return Err(GroupError::BadGenerator("outside [2, p-2]"));
        }
        if q < &BigUint::from(2u32) || !g.modpow(q, p).is_one() {
            return Err(GroupError::BadGenerator("g^q != 1 mod p"));
        }
        Ok(())
    }

    pub fn p(&self) -> &BigUint {
        &self.p
    }

    pub fn g(&self) -> &BigUint {
        &self.g
    }

    pub fn q(&self) -> &BigUint {
        &self.q
    }

    /// Prime factorization of `q`, when known.
    pub fn order_factors(&self) -> Option<&[(BigUint, u32)]> {
        self.order_factors.as_deref()
    }

    pub fn magnitude_bits(&self) -> u64 {
        magnitude_bits(&self.p)
    }

    /// True when `y` lies in the subgroup generated by `g`.
    pub fn contains(&self, y: &BigUint) -> bool {
        !y.is_zero() && y < &self.p && y.modpow(&self.q, &self.p).is_one()
    }
}

/// Safe prime `p = 2q + 1` of exactly `bits` bits with `g` generating the
/// order-`q` subgroup of quadratic residues. Deterministic per seed.
pub fn generate_safe_prime(bits: u64, rng_seed: u64) -> Result<DhGroup, GroupError> {
    if bits < 16 {
        return Err(GroupError::BitsTooSmall { bits });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let low = BigUint::one() << (bits - 2);
    let high = (BigUint::one() << (bits - 1)) - 1u32;
    let sieve = &small_primes()[1..512];
    loop {
        let mut q = random_in_range(&mut rng, &low, &high);
        q |= BigUint::one();
        // Both q and 2q+1 must avoid every small prime (unless equal to it).
        let rejected = sieve.iter().any(|&r| {
            let qr = (&q % r).to_u32().unwrap_or(0);
            (qr == 0 && q != BigUint::from(r)) || (2 * qr as u64 + 1).is_multiple_of(r as u64)
        });
        if rejected {
            continue;
        }
        if !is_probable_prime(&q, 1) {
            continue;
        }
        let p: BigUint = (&q << 1) + 1u32;
        if !is_probable_prime(&p, DEFAULT_MR_ROUNDS) || !is_probable_prime(&q, DEFAULT_MR_ROUNDS) {
            continue;
        }
        debug_assert_eq!(p.bits(), bits);
        let p_minus_one = &p - 1u32;
        let two = BigUint::from(2u32);
        let high_h = &p - 2u32;
        let g = loop {
            let h = random_in_range(&mut rng, &two, &high_h);
            let g = (&h * &h) % &p;
            if !g.is_one() && g != p_minus_one {
                break g;
            }
        };
        return DhGroup::new(p, g, q);
    }
}

/// One side of a Diffie-Hellman exchange.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DhKeyPair {
    secret: BigUint,
    public_value: BigUint,
}

impl DhKeyPair {
    pub fn from_secret(group: &DhGroup, secret: BigUint) -> Result<Self, GroupError> {
        if secret.is_zero() || secret >= *group.q() {
            return Err(GroupError::InvalidSecret);
        }
        let public_value = group.g().modpow(&secret, group.p());
        Ok(DhKeyPair {
            secret,
            public_value,
        })
    }

    pub fn secret(&self) -> &BigUint {
        &self.secret
    }

    pub fn public_value(&self) -> &BigUint {
        &self.public_value
    }
}

/// Fresh keypair with secret uniform in `[1, q-1]`.
pub fn dh_generate_keypair(group: &DhGroup, rng_seed: u64) -> DhKeyPair {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let high = group.q() - 1u32;
    loop {
        let secret = random_in_range(&mut rng, &BigUint::one(), &high);
        let public_value = group.g().modpow(&secret, group.p());
        // Public value 1 only happens for degenerate groups; retry anyway.
        if public_value > BigUint::one() {
            return DhKeyPair {
                secret,
                public_value,
            };
        }
    }
}

/// The agreed value `g^(ab) mod p`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SharedSecret {
    value: BigUint,
}

impl SharedSecret {
    pub fn value(&self) -> &BigUint {
        &self.value
    }

    /// Minimal big-endian bytes of the value (leading zeros stripped).
    pub fn to_bytes(&self) -> Vec<u8> {
        self.value.to_bytes_be()
    }
}

/// Rejects the degenerate values 0, 1, p-1 (and anything >= p).
pub fn check_public_value(value: &BigUint, p: &BigUint) -> Result<(), GroupError> {
    if value <= &BigUint::one() || p < &BigUint::from(3u32) || value >= &(p - 1u32) {
        return Err(GroupError::InvalidPublicValue);
    }
    Ok(())
}

pub fn dh_shared_secret(
    own: &DhKeyPair,
    peer_public: &BigUint,
    group: &DhGroup,
) -> Result<SharedSecret, GroupError> {
    check_public_value(peer_public, group.p())?;
    Ok(SharedSecret {
        value: peer_public.modpow(own.secret(), group.p()),
    })
}

/// Returns `(encoded_bits, magnitude_bits)` for a big-endian encoding that may
/// carry leading zero bytes.
pub fn measure_magnitude_bits(encoded: &[u8], value: &BigUint) -> Result<(u64, u64), GroupError> {
    if BigUint::from_bytes_be(encoded) != *value {
        return Err(GroupError::EncodingMismatch);
    }
    Ok((8 * encoded.len() as u64, magnitude_bits(value)))
}

/// Lowercase hexadecimal without a radix prefix.
pub fn to_hex(n: &BigUint) -> String {
    n.to_str_radix(16)
}

pub fn parse_hex(s: &str) -> Result<BigUint, GroupError> {
    let trimmed = s.trim();
    let digits = trimmed.strip_prefix("0x").unwrap_or(trimmed);
    if digits.is_empty() {
        return Err(GroupError::BadHex(s.to_string()));
    }
    BigUint::parse_bytes(digits.as_bytes(), 16).ok_or_else(|| GroupError::BadHex(s.to_string()))
}

/// Big-endian bytes of a hex string, keeping leading zero digits as padding.
pub fn hex_to_padded_bytes(s: &str) -> Result<Vec<u8>, GroupError> {
    let trimmed = s.trim();
    let digits = trimmed.strip_prefix("0x").unwrap_or(trimmed);
    let owned;
    let even = if digits.len() % 2 == 1 {
        owned = format!("0{digits}");
        owned.as_str()
    } else {
        digits
    };
    hex::decode(even).map_err(|_| GroupError::BadHex(s.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn big(n: u64) -> BigUint {
        BigUint::from(n)
    }

    fn naive_pow(base: u64, exp: u64, m: u64) -> u64 {
        let mut acc = 1 % m;
        for _ in 0..exp {
            acc = acc * (base % m) % m;
        }
        acc
    }

    #[test]
    fn mod_exp_examples() {
        assert_eq!(naive_pow(3, 5, 23), 13);
        assert_eq!(mod_exp(&big(3), &big(5), &big(23)).unwrap(), big(13));
        assert_eq!(mod_exp(&big(7), &big(0), &big(23)).unwrap(), big(1));
        assert_eq!(mod_exp(&big(30), &big(1), &big(23)).unwrap(), big(7));
        assert_eq!(
            mod_exp(&big(3), &big(5), &big(1)),
            Err(GroupError::ModulusTooSmall)
        );
    }

    #[test]
    fn mod_exp_matches_naive_on_grid() {
        for m in (2u64..65536).step_by(997) {
            for base in [0u64, 1, 2, 3, 255, 4095, 65535] {
                for exp in [0u64, 1, 2, 7, 31, 100] {
                    assert_eq!(
                        mod_exp(&big(base), &big(exp), &big(m)).unwrap(),
                        big(naive_pow(base, exp, m)),
                        "{base}^{exp} mod {m}"
                    );
                }
            }
        }
    }

    #[test]
    fn primality_examples() {
        assert!(is_probable_prime(&big(23), DEFAULT_MR_ROUNDS));
        assert!(!is_probable_prime(&big(1), DEFAULT_MR_ROUNDS));
        assert!(!is_probable_prime(&big(0), DEFAULT_MR_ROUNDS));
        assert!(!is_probable_prime(&big(561), DEFAULT_MR_ROUNDS));
        // Carmichael numbers above the trial-division cutoff.
        assert!(!is_probable_prime(&big(1_193_221), DEFAULT_MR_ROUNDS));
        assert!(!is_probable_prime(&big(3_215_031_751), DEFAULT_MR_ROUNDS));
        assert!(is_probable_prime(&big(4_294_967_291), DEFAULT_MR_ROUNDS));
        assert!(is_probable_prime(
            &((BigUint::one() << 127) - 1u32),
            DEFAULT_MR_ROUNDS
        ));
    }

    #[test]
    fn primality_agrees_with_trial_division() {
        for n in (65_000u64..140_000).step_by(7) {
            assert_eq!(
                is_probable_prime(&big(n), DEFAULT_MR_ROUNDS),
                trial_division_is_prime(n),
                "{n}"
            );
        }
    }

    #[test]
    fn safe_prime_shape() {
        assert!(is_safe_prime(&big(23)));
        assert!(!is_safe_prime(&big(29)));
        assert!(is_safe_prime(&big(1019)));
    }

    #[test]
    fn generated_safe_prime_has_requested_size() {
        let group = generate_safe_prime(16, 1).unwrap();
        assert_eq!(group.magnitude_bits(), 16);
        let q: BigUint = (group.p() - 1u32) >> 1;
        assert!(trial_division_is_prime(q.to_u64().unwrap()));
        assert!(trial_division_is_prime(group.p().to_u64().unwrap()));
        assert_eq!(&q, group.q());
        assert!(group.g().modpow(group.q(), group.p()).is_one());
        assert_eq!(generate_safe_prime(16, 1).unwrap(), group);
        assert_eq!(
            generate_safe_prime(15, 1),
            Err(GroupError::BitsTooSmall { bits: 15 })
        );
    }

    #[test]
    fn generated_safe_primes_are_safe() {
        for (bits, seed) in [(20, 3), (32, 4), (48, 5), (64, 6), (96, 7)] {
            let group = generate_safe_prime(bits, seed).unwrap();
            assert_eq!(group.magnitude_bits(), bits);
            assert!(is_safe_prime(group.p()));
            assert!(group.g() != &BigUint::one());
        }
    }

    #[test]
    fn keypair_examples() {
        let group = DhGroup::new(big(23), big(4), big(11)).unwrap();
        assert_eq!(
            DhKeyPair::from_secret(&group, big(1))
                .unwrap()
                .public_value(),
            &big(4)
        );
        assert_eq!(naive_pow(4, 3, 23), 18);
        assert_eq!(
            DhKeyPair::from_secret(&group, big(3))
                .unwrap()
                .public_value(),
            &big(18)
        );
        assert!(DhKeyPair::from_secret(&group, big(0)).is_err());
        assert!(DhKeyPair::from_secret(&group, big(11)).is_err());

        let big_group = generate_safe_prime(64, 9).unwrap();
        let a = dh_generate_keypair(&big_group, 1);
        let b = dh_generate_keypair(&big_group, 2);
        assert_ne!(a.secret(), b.secret());
        assert_eq!(dh_generate_keypair(&big_group, 1), a);
    }

    #[test]
    fn shared_secret_examples() {
        let group = DhGroup::new(big(23), big(4), big(11)).unwrap();
        let a = DhKeyPair::from_secret(&group, big(3)).unwrap();
        let b = DhKeyPair::from_secret(&group, big(5)).unwrap();
        let expected = naive_pow(4, 15, 23);
        let s1 = dh_shared_secret(&a, b.public_value(), &group).unwrap();
        let s2 = dh_shared_secret(&b, a.public_value(), &group).unwrap();
        assert_eq!(s1.value(), &big(expected));
        assert_eq!(s1, s2);
        for bad in [0u64, 1, 22, 23, 40] {
            assert_eq!(
                dh_shared_secret(&a, &big(bad), &group),
                Err(GroupError::InvalidPublicValue)
            );
        }
    }

    #[test]
    fn group_validation() {
        assert!(DhGroup::new(big(24), big(4), big(11)).is_err());
        assert!(DhGroup::new(big(23), big(5), big(11)).is_err());
        assert!(DhGroup::new(big(23), big(22), big(2)).is_err());
        assert!(DhGroup::from_safe_prime(big(29), big(4)).is_err());
        // 31: order 30 = 2*3*5, 3 is a primitive root, 2 has order 5.
        let factors = vec![(big(2), 1), (big(3), 1), (big(5), 1)];
        assert!(DhGroup::with_order_factorization(big(31), big(3), factors.clone()).is_ok());
        assert!(DhGroup::with_order_factorization(big(31), big(2), factors).is_err());
    }

    #[test]
    fn magnitude_examples() {
        let v: BigUint = (BigUint::one() << 47) + 1u32;
        let mut enc = vec![0u8; 16];
        let raw = v.to_bytes_be();
        enc[16 - raw.len()..].copy_from_slice(&raw);
        assert_eq!(measure_magnitude_bits(&enc, &v).unwrap(), (128, 48));
        assert_eq!(measure_magnitude_bits(&[0xff], &big(255)).unwrap(), (8, 8));
        assert_eq!(
            measure_magnitude_bits(&[0, 0xff], &big(255)).unwrap(),
            (16, 8)
        );
        assert_eq!(
            measure_magnitude_bits(&[0xfe], &big(255)),
            Err(GroupError::EncodingMismatch)
        );
    }

    #[test]
    fn hex_helpers() {
        assert_eq!(to_hex(&big(0xabcdef)), "abcdef");
        assert_eq!(parse_hex("ABCdef").unwrap(), big(0xabcdef));
        assert!(parse_hex("xyz").is_err());
        assert!(parse_hex("").is_err());
        assert_eq!(hex_to_padded_bytes("000fff").unwrap(), vec![0, 0x0f, 0xff]);
        assert_eq!(hex_to_padded_bytes("fff").unwrap(), vec![0x0f, 0xff]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(1000))]

            #[test]
            fn dh_symmetry(bits in 16u64..=64, a in 1u64.., b in 1u64.., seed in 0u64..4) {
                // A small pool of groups per size keeps generation cheap.
                let group = generate_safe_prime(bits, seed).unwrap();
                let a = big(a) % group.q();
                let b = big(b) % group.q();
                let ga = mod_exp(group.g(), &a, group.p()).unwrap();
                let gb = mod_exp(group.g(), &b, group.p()).unwrap();
                prop_assert_eq!(
                    mod_exp(&ga, &b, group.p()).unwrap(),
                    mod_exp(&gb, &a, group.p()).unwrap()
                );
            }

            #[test]
            fn padding_changes_only_encoded_bits(value in 0u64.., pad in 0usize..8) {
                let v = big(value);
                let raw = v.to_bytes_be();
                let mut padded = vec![0u8; pad];
                padded.extend_from_slice(&raw);
                let (enc0, mag0) = measure_magnitude_bits(&raw, &v).unwrap();
                let (enc1, mag1) = measure_magnitude_bits(&padded, &v).unwrap();
                prop_assert_eq!(mag0, mag1);
                prop_assert_eq!(enc1, enc0 + 8 * pad as u64);
            }
        }
    }
}
