// SPDX-License-Identifier: Apache-2.0

//! The standard normal CDF and the Gaussian-mechanism trade-off function
//! `kappa_eps(s) = Phi(s/2 - eps/s) - e^eps Phi(-s/2 - eps/s)` with its inverse.

use super::MechanismError;

/// `Phi(s)`, via the complementary error function.
pub fn std_normal_cdf(s: f64) -> f64 {
    0.5 * libm::erfc(-s / std::f64::consts::SQRT_2)
}

/// `ln Phi(s)`, accurate far into the lower tail.
pub fn ln_std_normal_cdf(s: f64) -> f64 {
    if s > -35.0 {
        return std_normal_cdf(s).ln();
    }
    // Mills-ratio asymptotic series.
    let r = 1.0 / (s * s);
    let series = 1.0 - r * (1.0 - 3.0 * r * (1.0 - 5.0 * r * (1.0 - 7.0 * r)));
    -0.5 * s * s - (-s).ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() + series.ln()
}

fn check_positive(name: &'static str, value: f64) -> Result<(), MechanismError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(MechanismError::NonPositive { name, value })
    }
}

fn kappa_unchecked(eps: f64, s: f64) -> f64 {
    let lead = std_normal_cdf(0.5 * s - eps / s);
    let tail = (eps + ln_std_normal_cdf(-0.5 * s - eps / s)).exp();
    lead - tail
}

pub fn kappa(eps: f64, s: f64) -> Result<f64, MechanismError> {
    check_positive("epsilon", eps)?;
    check_positive("s", s)?;
    Ok(kappa_unchecked(eps, s))
}

/// The `s` with `kappa(eps, s) = delta`, by bracket doubling from `s = 1`
/// and bisection.
pub fn kappa_inv(eps: f64, delta: f64) -> Result<f64, MechanismError> {
    check_positive("epsilon", eps)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(MechanismError::DeltaRange(delta));
    }
    let k = |s: f64| kappa_unchecked(eps, s);
    let (mut lo, mut hi) = if k(1.0) >= delta {
        let mut lo = 0.5;
        while k(lo) >= delta {
            lo *= 0.5;
        }
        (lo, 2.0 * lo)
    } else {
        let mut hi = 2.0;
        while k(hi) < delta {
            hi *= 2.0;
        }
        (0.5 * hi, hi)
    };
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if k(mid) < delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(if (k(lo) - delta).abs() <= (k(hi) - delta).abs() {
        lo
    } else {
        hi
    })
}
