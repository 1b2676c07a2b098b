// SPDX-License-Identifier: Apache-2.0

//! Scalar abstraction shared by the linear-algebra, consensus and protocol code.
//!
//! Everything numerical that does not need transcendental functions is written
//! against [`Scalar`] (a ring with conversions) or [`Field`] (adds division), so
//! the same code runs on `f32`, `f64`, exact [`BigRational`]s and the wide
//! fixed-point type in [`crate::wide`].

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

pub trait Scalar:
    Clone
    + Debug
    + PartialOrd
    + Zero
    + One
    + Neg<Output = Self>
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Send
    + Sync
    + 'static
{
    /// Converts from `f64`; exact whenever the value is representable.
    fn from_f64(x: f64) -> Self;

    /// Nearest `f64` (may round or overflow to infinity).
    fn to_f64(&self) -> f64;

    /// Converts an exact rational, rounding when the type cannot hold it.
    fn from_rational(r: &BigRational) -> Self;

    /// The value `v / 2^frac_bits`.
    fn from_scaled_int(v: &BigInt, frac_bits: u32) -> Self {
        Self::from_rational(&BigRational::new(v.clone(), BigInt::one() << frac_bits))
    }

    fn magnitude(&self) -> Self {
        if *self < Self::zero() {
            -self.clone()
        } else {
            self.clone()
        }
    }

    /// Relative rounding unit; zero for exact arithmetic.
    fn rounding_unit() -> f64;
}

/// A [`Scalar`] with division.
pub trait Field: Scalar + Div<Output = Self> {}

impl Scalar for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn from_rational(r: &BigRational) -> Self {
        ToPrimitive::to_f64(r).unwrap_or(f64::NAN)
    }

    fn from_scaled_int(v: &BigInt, frac_bits: u32) -> Self {
        let x = v.to_f64().unwrap_or(f64::NAN);
        x * 2f64.powi(-(frac_bits as i32))
    }

    fn rounding_unit() -> f64 {
        f64::EPSILON
    }
}

impl Field for f64 {}

impl Scalar for f32 {
    fn from_f64(x: f64) -> Self {
        x as f32
    }

    fn to_f64(&self) -> f64 {
        *self as f64
    }

    fn from_rational(r: &BigRational) -> Self {
        ToPrimitive::to_f32(r).unwrap_or(f32::NAN)
    }

    fn rounding_unit() -> f64 {
        f32::EPSILON as f64
    }
}

impl Field for f32 {}

impl Scalar for BigRational {
    fn from_f64(x: f64) -> Self {
        BigRational::from_float(x).expect("finite f64")
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn from_rational(r: &BigRational) -> Self {
        r.clone()
    }

    fn rounding_unit() -> f64 {
        0.0
    }
}

impl Field for BigRational {}

pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (x, y)| acc + x.clone() * y.clone())
}

pub(crate) fn norm_sq<T: Scalar>(a: &[T]) -> T {
    dot(a, a)
}

pub(crate) fn sub_vec<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(x, y)| x.clone() - y.clone()).collect()
}

pub(crate) fn add_vec<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(x, y)| x.clone() + y.clone()).collect()
}

pub(crate) fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
