//! Generic-group discrete logarithms: baby-step/giant-step and Pohlig-Hellman.

use std::collections::HashMap;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};

use super::modring::ModRing;
use super::DlogError;
use crate::group_math::{is_probable_prime, DhGroup, DEFAULT_MR_ROUNDS};

/// Largest subgroup order `bsgs_log` accepts (the table holds sqrt(order)
/// entries).
pub const MAX_BSGS_ORDER_BITS: u64 = 50;

pub(crate) fn ring_for(group: &DhGroup) -> Result<ModRing, DlogError> {
    ModRing::from_big(group.p()).ok_or(DlogError::UnsupportedSize {
        bits: group.magnitude_bits(),
    })
}

fn to_u128(n: &BigUint, what: &'static str) -> Result<u128, DlogError> {
    n.to_u128().ok_or(DlogError::TooLarge(what))
}

/// Solves `base^x = target` for `x` in `[0, order)`.
pub(crate) fn bsgs_raw(ring: &ModRing, base: u128, target: u128, order: u128) -> Option<u128> {
    if order == 0 {
        return None;
    }
    let target = ring.reduce(target);
    if target == 1 {
        return Some(0);
    }
    let m = (order as f64).sqrt().ceil() as u128;
    let m = m.max(1);
    let mut table: HashMap<u128, u128> = HashMap::with_capacity(m as usize);
    let mut cur = 1u128;
    for j in 0..m {
        table.entry(cur).or_insert(j);
        cur = ring.mul(cur, ring.reduce(base));
    }
    // cur == base^m; giant steps multiply by base^-m.
    let giant = ring.inv(cur)?;
    let mut gamma = target;
    let steps = order.div_ceil(m);
    for i in 0..=steps {
        if let Some(&j) = table.get(&gamma) {
            let x = i * m + j;
            if x < order {
                return Some(x);
            }
        }
        gamma = ring.mul(gamma, giant);
    }
    None
}

/// Baby-step/giant-step logarithm of `target` to base `g` within a subgroup
/// of the given order. Time and memory are O(sqrt(order)).
pub fn bsgs_log(group: &DhGroup, target: &BigUint, order: &BigUint) -> Result<BigUint, DlogError> {
    if order.bits() > MAX_BSGS_ORDER_BITS {
        return Err(DlogError::TooLarge("order"));
    }
    let ring = ring_for(group)?;
    let g = to_u128(group.g(), "generator")?;
    let t = to_u128(target, "target")?;
    if t == 0 || t >= ring.modulus() {
        return Err(DlogError::NotFound);
    }
    let order = to_u128(order, "order")?;
    bsgs_raw(&ring, g, t, order)
        .map(BigUint::from)
        .ok_or(DlogError::NotFound)
}

/// Pohlig-Hellman: solve in each prime-power subgroup with BSGS, then
/// recombine with the Chinese Remainder Theorem.
pub fn pohlig_hellman_log(
    group: &DhGroup,
    target: &BigUint,
    order_factorization: &[(BigUint, u32)],
) -> Result<BigUint, DlogError> {
    let ring = ring_for(group)?;
    let g = to_u128(group.g(), "generator")?;
    let t = to_u128(target, "target")?;
    if t == 0 || t >= ring.modulus() {
        return Err(DlogError::NotFound);
    }
    if order_factorization.is_empty() {
        return Err(DlogError::BadFactorization("empty factorization"));
    }

    let mut n = BigUint::one();
    for (r, e) in order_factorization {
        if *e == 0 || !is_probable_prime(r, DEFAULT_MR_ROUNDS) {
            return Err(DlogError::BadFactorization("entry is not a prime power"));
        }
        n *= r.pow(*e);
    }
    let n = to_u128(&n, "order")?;
    if ring.pow(g, n) != 1 {
        return Err(DlogError::BadFactorization(
            "g^n != 1 for the declared order n",
        ));
    }
    let mut residues = Vec::with_capacity(order_factorization.len());
    for (r, e) in order_factorization {
        let r = to_u128(r, "factor")?;
        if 128 - r.leading_zeros() as u64 > MAX_BSGS_ORDER_BITS {
            return Err(DlogError::TooLarge("prime factor"));
        }
        if ring.pow(g, n / r) == 1 {
            return Err(DlogError::BadFactorization(
                "declared order is not the exact order of g",
            ));
        }
        let re = r.pow(*e);
        let cofactor = n / re;
        let g_i = ring.pow(g, cofactor);
        let h_i = ring.pow(t, cofactor);
        // gamma has order exactly r.
        let gamma = ring.pow(g_i, re / r);
        let g_i_inv = ring.inv(g_i).ok_or(DlogError::NotFound)?;
        let mut x = 0u128;
        let mut r_k = 1u128;
        for k in 0..*e {
            let shifted = ring.mul(ring.pow(g_i_inv, x), h_i);
            let h_k = ring.pow(shifted, re / (r_k * r));
            let d = bsgs_raw(&ring, gamma, h_k, r).ok_or(DlogError::NotFound)?;
            x += d * r_k;
            if k + 1 < *e {
                r_k *= r;
            }
        }
        residues.push((x, re));
    }
    let x = crt(&residues).ok_or(DlogError::BadFactorization("moduli not coprime"))?;
    if ring.pow(g, x) != t {
        return Err(DlogError::NotFound);
    }
    Ok(BigUint::from(x))
}

/// Combines `x = a_i mod m_i` for pairwise coprime moduli.
pub(crate) fn crt(residues: &[(u128, u128)]) -> Option<u128> {
    let mut x = 0u128;
    let mut modulus = 1u128;
    for &(a, m) in residues {
        if modulus == 1 {
            x = a % m;
            modulus = m;
            continue;
        }
        let combined = modulus.checked_mul(m)?;
        if combined >> ModRing::MAX_BITS != 0 {
            return None;
        }
        let ring_m = ModRing::new(m);
        let inv = ring_m.inv(modulus % m)?;
        // x + modulus * ((a - x) * inv mod m)
        let t = ring_m.mul(ring_m.sub(a % m, x % m), inv);
        let ring = ModRing::new(combined);
        x = ring.add(x, ring.mul(modulus, t));
        modulus = combined;
    }
    Some(x)
}
