//! Residue arithmetic for moduli below 2^127, used on the hot paths of the
//! discrete-log engine where `BigUint` allocation would dominate.

use num_bigint::BigUint;
use num_traits::ToPrimitive;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ModRing {
    m: u128,
}

impl ModRing {
    pub(crate) const MAX_BITS: u64 = 126;

    pub(crate) fn new(m: u128) -> Self {
        assert!(m >= 2 && m >> Self::MAX_BITS == 0, "modulus out of range");
        ModRing { m }
    }

    pub(crate) fn from_big(m: &BigUint) -> Option<Self> {
        let v = m.to_u128()?;
        (v >= 2 && v >> Self::MAX_BITS == 0).then(|| ModRing::new(v))
    }

    #[inline]
    pub(crate) fn modulus(&self) -> u128 {
        self.m
    }

    #[inline]
    pub(crate) fn reduce(&self, a: u128) -> u128 {
        a % self.m
    }

    #[inline]
    pub(crate) fn add(&self, a: u128, b: u128) -> u128 {
        let s = a + b;
        if s >= self.m {
            s - self.m
        } else {
            s
        }
    }

    #[inline]
    pub(crate) fn sub(&self, a: u128, b: u128) -> u128 {
        if a >= b {
            a - b
        } else {
            a + self.m - b
        }
    }

    #[inline]
    pub(crate) fn mul(&self, a: u128, b: u128) -> u128 {
        if self.m >> 64 == 0 {
            return (a * b) % self.m;
        }
        // Double-and-add; both operands are already reduced.
        let mut acc = 0u128;
        let mut addend = a;
        let mut rest = b;
        while rest != 0 {
            if rest & 1 == 1 {
                acc = self.add(acc, addend);
            }
            addend = self.add(addend, addend);
            rest >>= 1;
        }
        acc
    }

    pub(crate) fn pow(&self, base: u128, mut exp: u128) -> u128 {
        let mut result = 1 % self.m;
        let mut b = self.reduce(base);
        while exp != 0 {
            if exp & 1 == 1 {
                result = self.mul(result, b);
            }
            b = self.mul(b, b);
            exp >>= 1;
        }
        result
    }

    /// Multiplicative inverse via the extended Euclidean algorithm.
    pub(crate) fn inv(&self, a: u128) -> Option<u128> {
        let (mut old_r, mut r) = (self.reduce(a) as i128, self.m as i128);
        let (mut old_s, mut s) = (1i128, 0i128);
        while r != 0 {
            let quotient = old_r / r;
            (old_r, r) = (r, old_r - quotient * r);
            (old_s, s) = (s, old_s - quotient * s);
        }
        if old_r != 1 {
            return None;
        }
        Some(old_s.rem_euclid(self.m as i128) as u128)
    }
}
