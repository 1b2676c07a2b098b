// SPDX-License-Identifier: Apache-2.0

//! Numerical privacy-loss check for additive scalar noise.
//!
//! For output densities `p` (input `0`) and `q` (input `mu`) the smallest
//! admissible `delta` at a given `eps` is `max` over both orderings of
//! `int max(p(z) - e^eps q(z), 0) dz`. The integrand is evaluated in the log
//! domain so very large `eps` cannot overflow.

use super::calibration::PrivacyBudget;
use super::quadrature::integrate;
use super::special::ln_std_normal_cdf;
use super::trunc_laplace::TruncatedLaplace;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ScalarMechanism {
    TruncatedLaplace(TruncatedLaplace),
    Gaussian { sigma: f64 },
}

impl ScalarMechanism {
    fn ln_density(&self, z: f64) -> f64 {
        match self {
            Self::TruncatedLaplace(t) => t.ln_density(z),
            Self::Gaussian { sigma } => {
                let u = z / sigma;
                -0.5 * u * u - sigma.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
            }
        }
    }

    /// Points where the density is non-smooth, and the integration window.
    fn landmarks(&self) -> (Vec<f64>, f64, f64) {
        match self {
            Self::TruncatedLaplace(t) => (vec![-t.bound(), 0.0, t.bound()], -t.bound(), t.bound()),
            Self::Gaussian { sigma } => (vec![0.0], -40.0 * sigma, 40.0 * sigma),
        }
    }
}

const SCAN_POINTS: usize = 64;
const TOL: f64 = 1e-13;

fn one_direction(mech: &ScalarMechanism, eps: f64, from: f64, to: f64) -> f64 {
    let (marks, lo, hi) = mech.landmarks();
    // `p` is centred at `from`, `q` at `to`.
    let ln_p = |z: f64| mech.ln_density(z - from);
    let ln_q = |z: f64| mech.ln_density(z - to);
    let gap = |z: f64| ln_p(z) - eps - ln_q(z);
    let integrand = |z: f64| {
        let lp = ln_p(z);
        let g = lp - eps - ln_q(z);
        if g > 0.0 {
            // p - e^eps q = p (1 - e^{-g})
            -lp.exp() * (-g).exp_m1()
        } else {
            0.0
        }
    };
    let mut cuts: Vec<f64> = marks
        .iter()
        .flat_map(|m| [m + from, m + to])
        .chain([lo + from.min(to), hi + from.max(to)])
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut pieces = Vec::new();
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let mut prev = a;
        let mut prev_sign = gap(a + (b - a) * 1e-12) > 0.0;
        for k in 1..=SCAN_POINTS {
            let z = a + (b - a) * k as f64 / SCAN_POINTS as f64;
            let probe = if k == SCAN_POINTS { b - (b - a) * 1e-12 } else { z };
            let sign = gap(probe) > 0.0;
            if sign != prev_sign {
                let (mut l, mut r) = (prev, probe);
                for _ in 0..200 {
                    let mid = 0.5 * (l + r);
                    if mid <= l || mid >= r {
                        break;
                    }
                    if (gap(mid) > 0.0) == prev_sign {
                        l = mid;
                    } else {
                        r = mid;
                    }
                }
                pieces.push(0.5 * (l + r));
                prev_sign = sign;
            }
            prev = probe;
        }
        pieces.push(a);
        pieces.push(b);
    }
    pieces.sort_by(f64::total_cmp);
    pieces.dedup();
    pieces
        .windows(2)
        .map(|w| integrate(integrand, w[0], w[1], TOL * 1e-3, TOL).value)
        .sum()
}

/// Worst-case `delta` of `z + noise` for a shift of `budget.mu()` at `budget.epsilon()`.
pub fn dp_verify_numeric(mech: &ScalarMechanism, budget: &PrivacyBudget) -> f64 {
    let eps = budget.epsilon();
    let mu = budget.mu();
    one_direction(mech, eps, 0.0, mu).max(one_direction(mech, eps, mu, 0.0))
}

/// Closed-form value of the same integral for Gaussian noise.
pub fn gaussian_delta(sigma: f64, mu: f64, eps: f64) -> f64 {
    let s = mu / sigma;
    super::special::std_normal_cdf(0.5 * s - eps / s) - (eps + ln_std_normal_cdf(-0.5 * s - eps / s)).exp()
}
