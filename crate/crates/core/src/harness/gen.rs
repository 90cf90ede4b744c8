//! Group generators: the shared default groups and deliberately weak
//! smooth-order groups for audit demos.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::One;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::group_math::{
    generate_safe_prime, is_probable_prime, DhGroup, GroupError, DEFAULT_MR_ROUNDS,
};

/// Seed of the export-tier group every non-randomizing server shares.
pub const SHARED_EXPORT_SEED: u64 = 0x4c4a_0001;
pub const SHARED_STRONG_SEED: u64 = 0x4c4a_0002;

/// `generate_safe_prime(bits, seed)`, memoized for the process.
pub fn shared_group(bits: u64, seed: u64) -> Result<DhGroup, GroupError> {
    static CACHE: OnceLock<Mutex<HashMap<(u64, u64), DhGroup>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(g) = cache.lock().expect("cache lock").get(&(bits, seed)) {
        return Ok(g.clone());
    }
    let group = generate_safe_prime(bits, seed)?;
    cache
        .lock()
        .expect("cache lock")
        .insert((bits, seed), group.clone());
    Ok(group)
}

fn random_small_prime(rng: &mut ChaCha8Rng, low: u64, high: u64) -> Option<u64> {
    if low > high {
        return None;
    }
    for _ in 0..10_000 {
        let c = rng.gen_range(low..=high);
        if is_probable_prime(&BigUint::from(c), DEFAULT_MR_ROUNDS) {
            return Some(c);
        }
    }
    None
}

/// A prime `p` of exactly `bits` bits with `p - 1 = 2 * (product of primes
/// below 2^max_factor_bits)`, and a generator of the full group Z_p*. The
/// returned group carries the factorization of its order `p - 1`.
pub fn generate_smooth_order_group(
    bits: u64,
    max_factor_bits: u32,
    seed: u64,
) -> Result<DhGroup, GroupError> {
    if bits < 16 || !(3..=31).contains(&max_factor_bits) || (max_factor_bits as u64) >= bits {
        return Err(GroupError::BitsTooSmall { bits });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let top = (1u64 << max_factor_bits) - 1;
    let big_low = 1u64 << (max_factor_bits - 1);
    let target_low = BigUint::one() << (bits - 1);
    let target_high = (BigUint::one() << bits) - 1u32;
    for _ in 0..100_000 {
        let mut order = BigUint::from(2u32);
        let mut factors: Vec<u64> = vec![2];
        while order.bits() + (max_factor_bits as u64) < bits {
            let Some(r) = random_small_prime(&mut rng, big_low, top) else {
                break;
            };
            order *= r;
            factors.push(r);
        }
        // Last factor chosen so that p lands in [2^(bits-1), 2^bits).
        let low = (&target_low - 1u32).div_ceil(&order);
        let high = (&target_high - 1u32) / &order;
        let (Ok(low), Ok(high)) = (u64::try_from(low), u64::try_from(high)) else {
            continue;
        };
        let Some(r) = random_small_prime(&mut rng, low.max(3), high.min(top)) else {
            continue;
        };
        order *= r;
        factors.push(r);
        let p = &order + 1u32;
        if p.bits() != bits || !is_probable_prime(&p, DEFAULT_MR_ROUNDS) {
            continue;
        }
        let mut grouped: Vec<(BigUint, u32)> = Vec::new();
        factors.sort_unstable();
        for f in factors {
            match grouped.last_mut() {
                Some((last, e)) if *last == BigUint::from(f) => *e += 1,
                _ => grouped.push((BigUint::from(f), 1)),
            }
        }
        let n = &p - 1u32;
        let mut h = BigUint::from(2u32);
        while grouped
            .iter()
            .any(|(r, _)| h.modpow(&(&n / r), &p).is_one())
        {
            h += 1u32;
        }
        return DhGroup::with_order_factorization(p, h, grouped);
    }
    Err(GroupError::NotPrime)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smooth_group_shape() {
        for seed in 0..5 {
            let group = generate_smooth_order_group(40, 12, seed).unwrap();
            assert_eq!(group.p().bits(), 40);
            assert_eq!(*group.q(), group.p() - 1u32);
            let mut product = BigUint::one();
            for (r, e) in group.order_factors().unwrap() {
                assert!(r < &BigUint::from(1u32 << 12));
                product *= r.pow(*e);
            }
            assert_eq!(product, group.p() - 1u32);
        }
    }

    #[test]
    fn shared_group_is_memoized_and_deterministic() {
        let a = shared_group(32, 5).unwrap();
        let b = shared_group(32, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, generate_safe_prime(32, 5).unwrap());
    }
}
