use std::collections::BTreeMap;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

use super::DlogError;

/// All primes up to and including a bound `B`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactorBase {
    bound: u64,
    primes: Vec<u64>,
}

impl FactorBase {
    pub fn new(bound: u64) -> Result<Self, DlogError> {
        if bound < 2 {
            return Err(DlogError::EmptyFactorBase);
        }
        if bound > super::MAX_FACTOR_BASE_BOUND {
            return Err(DlogError::BoundTooLarge { bound });
        }
        let n = bound as usize + 1;
        let mut composite = vec![false; n];
        let mut primes = Vec::new();
        for i in 2..n {
            if !composite[i] {
                primes.push(i as u64);
                let mut j = i * i;
                while j < n {
                    composite[j] = true;
                    j += i;
                }
            }
        }
        Ok(FactorBase { bound, primes })
    }

    pub fn bound(&self) -> u64 {
        self.bound
    }

    pub fn primes(&self) -> &[u64] {
        &self.primes
    }

    pub fn len(&self) -> usize {
        self.primes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primes.is_empty()
    }

    pub fn index_of(&self, prime: u64) -> Option<usize> {
        self.primes.binary_search(&prime).ok()
    }
}

/// Trial-division outcome: `n = product(prime^mult) * cofactor`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SmoothnessResult {
    pub is_smooth: bool,
    pub factorization: BTreeMap<u64, u32>,
    pub cofactor: BigUint,
}

pub fn smooth_factor(n: &BigUint, base: &FactorBase) -> Result<SmoothnessResult, DlogError> {
    if n.is_zero() {
        return Err(DlogError::ZeroInput);
    }
    let mut factorization = BTreeMap::new();
    let cofactor = if let Some(small) = n.to_u128() {
        let mut exps = vec![0u32; base.len()];
        let rest = factor_over(small, base.primes(), &mut exps);
        for (p, e) in base.primes().iter().zip(exps) {
            if e > 0 {
                factorization.insert(*p, e);
            }
        }
        BigUint::from(rest)
    } else {
        let mut rest = n.clone();
        for &p in base.primes() {
            let mut e = 0;
            while (&rest % p).is_zero() {
                rest /= p;
                e += 1;
            }
            if e > 0 {
                factorization.insert(p, e);
            }
        }
        rest
    };
    Ok(SmoothnessResult {
        is_smooth: cofactor.is_one(),
        factorization,
        cofactor,
    })
}

/// Divides `n` by each prime to exhaustion, recording multiplicities into
/// `exps` (indexed like `primes`). Returns the remaining cofactor.
#[inline]
pub(crate) fn factor_over(n: u128, primes: &[u64], exps: &mut [u32]) -> u128 {
    if n >> 64 != 0 {
        let mut rest = n;
        for (i, &p) in primes.iter().enumerate() {
            let p = p as u128;
            while rest.is_multiple_of(p) {
                rest /= p;
                exps[i] += 1;
            }
        }
        return rest;
    }
    let mut rest = n as u64;
    for (i, &p) in primes.iter().enumerate() {
        while rest.is_multiple_of(p) {
            rest /= p;
            exps[i] += 1;
        }
        if rest == 1 {
            break;
        }
    }
    rest as u128
}
