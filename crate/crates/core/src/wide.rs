// SPDX-License-Identifier: Apache-2.0

//! Fixed-width, two's-complement fixed-point numbers with 64 fractional bits.
//!
//! The distributed-shuffling perturbations can be hundreds of orders of
//! magnitude larger than the data they hide. They cancel exactly in the
//! network-wide sum, but only if the consensus iterations do not lose the low
//! bits. `Wide<L>` keeps `64 * L - 65` integer bits and a fixed absolute
//! resolution of `2^-64`, so those cancellations survive.
//!
//! Multiplication truncates toward zero, which makes `(-a) * b == -(a * b)`
//! hold exactly. Symmetric pairwise updates therefore conserve sums exactly.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::{BigInt, Sign};
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::scalar::Scalar;

pub const FRAC_BITS: u32 = 64;

/// Upper bound on `L` (keeps the product buffer on the stack).
pub const MAX_LIMBS: usize = 16;

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Wide<const L: usize>([u64; L]);

impl<const L: usize> Wide<L> {
    pub const ZERO: Self = Wide([0; L]);

    const CHECK: () = assert!(L >= 2 && L <= MAX_LIMBS);

    pub fn is_negative(&self) -> bool {
        #[allow(clippy::let_unit_value)]
        let _ = Self::CHECK;
        self.0[L - 1] >> 63 == 1
    }

    fn wrapping_neg(&self) -> Self {
        let mut out = [0u64; L];
        let mut carry = 1u64;
        for (o, &limb) in out.iter_mut().zip(self.0.iter()) {
            let (v, c) = (!limb).overflowing_add(carry);
            *o = v;
            carry = c as u64;
        }
        Wide(out)
    }

    fn unsigned_abs(&self) -> [u64; L] {
        if self.is_negative() {
            self.wrapping_neg().0
        } else {
            self.0
        }
    }

    /// Builds from the raw integer `v`, i.e. the value `v / 2^64`.
    ///
    /// Panics when `v` does not fit.
    pub fn from_raw(v: &BigInt) -> Self {
        let (sign, digits) = v.to_u64_digits();
        assert!(
            digits.len() < L || (digits.len() == L && digits[L - 1] >> 63 == 0),
            "value exceeds Wide<{L}> range"
        );
        let mut limbs = [0u64; L];
        limbs[..digits.len()].copy_from_slice(&digits);
        let w = Wide(limbs);
        if sign == Sign::Minus {
            w.wrapping_neg()
        } else {
            w
        }
    }

    /// The raw integer `self * 2^64`.
    pub fn to_raw(&self) -> BigInt {
        let digits = to_u32_digits(&self.unsigned_abs());
        let mag = BigInt::from_biguint(Sign::Plus, num_bigint::BigUint::from_slice(&digits));
        if self.is_negative() {
            -mag
        } else {
            mag
        }
    }

    /// Largest magnitude representable, as `f64`.
    pub fn max_magnitude() -> f64 {
        2f64.powi((64 * L as i32) - 1 - FRAC_BITS as i32)
    }
}

fn to_u32_digits<const L: usize>(limbs: &[u64; L]) -> Vec<u32> {
    limbs
        .iter()
        .flat_map(|&l| [l as u32, (l >> 32) as u32])
        .collect()
}

impl<const L: usize> Default for Wide<L> {
    fn default() -> Self {
        Self::ZERO
    }
}

impl<const L: usize> fmt::Debug for Wide<L> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Wide({:e})", self.to_f64())
    }
}

impl<const L: usize> Add for Wide<L> {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        let mut out = [0u64; L];
        let mut carry = false;
        for i in 0..L {
            let (a, c1) = self.0[i].overflowing_add(rhs.0[i]);
            let (b, c2) = a.overflowing_add(carry as u64);
            out[i] = b;
            carry = c1 || c2;
        }
        let r = Wide(out);
        debug_assert!(
            self.is_negative() != rhs.is_negative() || r.is_negative() == self.is_negative(),
            "Wide addition overflow"
        );
        r
    }
}

impl<const L: usize> Sub for Wide<L> {
    type Output = Self;

    fn sub(self, rhs: Self) -> Self {
        let mut out = [0u64; L];
        let mut borrow = false;
        for i in 0..L {
            let (a, b1) = self.0[i].overflowing_sub(rhs.0[i]);
            let (b, b2) = a.overflowing_sub(borrow as u64);
            out[i] = b;
            borrow = b1 || b2;
        }
        let r = Wide(out);
        debug_assert!(
            self.is_negative() == rhs.is_negative() || r.is_negative() == self.is_negative(),
            "Wide subtraction overflow"
        );
        r
    }
}

impl<const L: usize> Neg for Wide<L> {
    type Output = Self;

    fn neg(self) -> Self {
        self.wrapping_neg()
    }
}

impl<const L: usize> Mul for Wide<L> {
    type Output = Self;

    fn mul(self, rhs: Self) -> Self {
        let negative = self.is_negative() != rhs.is_negative();
        let a = self.unsigned_abs();
        let b = rhs.unsigned_abs();
        // Product limbs 1..=L hold the result; limb 0 is the discarded fraction.
        let mut prod = [0u64; 2 * MAX_LIMBS];
        for (i, &ai) in a.iter().enumerate() {
            if ai == 0 {
                continue;
            }
            let mut carry = 0u128;
            for (j, &bj) in b.iter().enumerate() {
                let t = prod[i + j] as u128 + (ai as u128) * (bj as u128) + carry;
                prod[i + j] = t as u64;
                carry = t >> 64;
            }
            let mut k = i + L;
            while carry != 0 {
                let t = prod[k] as u128 + carry;
                prod[k] = t as u64;
                carry = t >> 64;
                k += 1;
            }
        }
        assert!(
            prod[L + 1..2 * L].iter().all(|&l| l == 0) && prod[L] >> 63 == 0,
            "Wide multiplication overflow"
        );
        let mut out = [0u64; L];
        out.copy_from_slice(&prod[1..=L]);
        let w = Wide(out);
        if negative {
            w.wrapping_neg()
        } else {
            w
        }
    }
}

impl<const L: usize> PartialOrd for Wide<L> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<const L: usize> Ord for Wide<L> {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self.is_negative(), other.is_negative()) {
            (true, false) => Ordering::Less,
            (false, true) => Ordering::Greater,
            _ => self.0.iter().rev().cmp(other.0.iter().rev()),
        }
    }
}

impl<const L: usize> Zero for Wide<L> {
    fn zero() -> Self {
        Self::ZERO
    }

    fn is_zero(&self) -> bool {
        self.0.iter().all(|&l| l == 0)
    }
}

impl<const L: usize> One for Wide<L> {
    fn one() -> Self {
        let mut limbs = [0u64; L];
        limbs[1] = 1;
        Wide(limbs)
    }
}

impl<const L: usize> Scalar for Wide<L> {
    fn from_f64(x: f64) -> Self {
        assert!(x.is_finite(), "cannot convert {x} to Wide");
        if x == 0.0 {
            return Self::ZERO;
        }
        let bits = x.to_bits();
        let exponent = ((bits >> 52) & 0x7ff) as i64;
        let fraction = bits & ((1u64 << 52) - 1);
        let (mantissa, exp) = if exponent == 0 {
            (fraction, -1074)
        } else {
            (fraction | (1u64 << 52), exponent - 1075)
        };
        let shift = exp + FRAC_BITS as i64;
        let mag = BigInt::from(mantissa);
        let raw = if shift >= 0 {
            mag << (shift as usize)
        } else {
            mag >> ((-shift) as usize)
        };
        let w = Self::from_raw(&raw);
        if x < 0.0 {
            -w
        } else {
            w
        }
    }

    fn to_f64(&self) -> f64 {
        <f64 as Scalar>::from_scaled_int(&self.to_raw(), FRAC_BITS)
    }

    fn from_rational(r: &BigRational) -> Self {
        // Truncation toward zero on the magnitude.
        let scaled: BigInt = (r.numer().abs() << FRAC_BITS) / r.denom().abs();
        let w = Self::from_raw(&scaled);
        if r.is_negative() {
            -w
        } else {
            w
        }
    }

    fn from_scaled_int(v: &BigInt, frac_bits: u32) -> Self {
        let w = if frac_bits <= FRAC_BITS {
            Self::from_raw(&(v.abs() << (FRAC_BITS - frac_bits)))
        } else {
            Self::from_raw(&(v.abs() >> (frac_bits - FRAC_BITS)))
        };
        if v.is_negative() {
            -w
        } else {
            w
        }
    }

    fn rounding_unit() -> f64 {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    type W = Wide<4>;

    #[test]
    fn f64_round_trip() {
        for x in [0.0, 1.0, -1.0, 0.3, -1.5e30, 2.0f64.powi(-64), 123456.789] {
            assert_eq!(W::from_f64(x).to_f64(), x, "{x}");
        }
    }

    #[test]
    fn one_is_unit() {
        let x = W::from_f64(-7.25);
        assert_eq!(x * W::one(), x);
        assert_eq!(W::one().to_f64(), 1.0);
    }

    #[test]
    fn ordering_is_signed() {
        assert!(W::from_f64(-2.0) < W::from_f64(-1.0));
        assert!(W::from_f64(-1.0) < W::zero());
        assert!(W::from_f64(3.0) > W::from_f64(2.5));
    }

    #[test]
    fn raw_round_trip() {
        let v = BigInt::from(-12345678901234567i64) << 100;
        assert_eq!(W::from_raw(&v).to_raw(), v);
    }

    #[test]
    #[should_panic(expected = "overflow")]
    fn multiplication_overflow_panics() {
        let big = W::from_f64(2f64.powi(100));
        let _ = big * big;
    }

    proptest! {
        #[test]
        fn products_are_odd_in_each_argument(a in -1e12f64..1e12, b in -1.0f64..1.0) {
            let (wa, wb) = (W::from_f64(a), W::from_f64(b));
            prop_assert_eq!((-wa) * wb, -(wa * wb));
            prop_assert_eq!(wa * (-wb), -(wa * wb));
        }

        #[test]
        fn arithmetic_tracks_f64(a in -1e6f64..1e6, b in -1e6f64..1e6) {
            let (wa, wb) = (W::from_f64(a), W::from_f64(b));
            prop_assert_eq!((wa + wb).to_f64(), a + b);
            prop_assert_eq!((wa - wb).to_f64(), a - b);
            let p = (wa * wb).to_f64();
            prop_assert!((p - a * b).abs() <= 1e-12 * (1.0 + (a * b).abs()));
        }
    }
}
