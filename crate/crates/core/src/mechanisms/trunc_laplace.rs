// SPDX-License-Identifier: Apache-2.0

//! Laplace noise of scale `mu / eps` restricted to `[-bound, bound]`.

use rand::Rng;

use super::MechanismError;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruncatedLaplace {
    scale: f64,
    bound: f64,
    /// Probability mass the untruncated law puts on the support, `1 - e^{-bound/scale}`.
    mass: f64,
}

impl TruncatedLaplace {
    pub fn new(mu: f64, eps: f64, bound: f64) -> Result<Self, MechanismError> {
        for (name, value) in [("mu", mu), ("epsilon", eps), ("gamma_bar", bound)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(MechanismError::NonPositive { name, value });
            }
        }
        Ok(Self::with_scale(mu / eps, bound))
    }

    fn with_scale(scale: f64, bound: f64) -> Self {
        Self {
            scale,
            bound,
            mass: -(-bound / scale).exp_m1(),
        }
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn density(&self, x: f64) -> f64 {
        if x.abs() > self.bound {
            0.0
        } else {
            (-x.abs() / self.scale).exp() / (2.0 * self.scale * self.mass)
        }
    }

    pub fn ln_density(&self, x: f64) -> f64 {
        if x.abs() > self.bound {
            f64::NEG_INFINITY
        } else {
            -x.abs() / self.scale - (2.0 * self.scale * self.mass).ln()
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let b = self.scale;
        if x <= -self.bound {
            0.0
        } else if x >= self.bound {
            1.0
        } else if x <= 0.0 {
            ((x / b).exp() - (-self.bound / b).exp()) / (2.0 * self.mass)
        } else {
            0.5 - (-x / b).exp_m1() / (2.0 * self.mass)
        }
    }

    pub fn inverse_cdf(&self, u: f64) -> f64 {
        let b = self.scale;
        let x = if u < 0.5 {
            b * ((-self.bound / b).exp() + 2.0 * self.mass * u).ln()
        } else {
            -b * (-2.0 * self.mass * (u - 0.5)).ln_1p()
        };
        x.clamp(-self.bound, self.bound)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.inverse_cdf(rng.random::<f64>())
    }

    /// Closed-form variance; a power series handles `bound << scale`.
    pub fn variance(&self) -> f64 {
        let r = self.bound / self.scale;
        // h(r) = 2 - e^{-r}(r^2 + 2r + 2) = int_0^r t^2 e^{-t} dt
        let h = if r < 0.5 {
            let mut term = r * r * r;
            let mut sum = 0.0;
            for k in 0..30 {
                sum += term / (k as f64 + 3.0);
                term *= -r / (k as f64 + 1.0);
            }
            sum
        } else {
            2.0 - (-r).exp() * (r * r + 2.0 * r + 2.0)
        };
        self.scale * self.scale * h / self.mass
    }
}

pub fn sample_trunc_laplace<R: Rng + ?Sized>(
    mu: f64,
    eps: f64,
    gamma_bar: f64,
    rng: &mut R,
) -> Result<f64, MechanismError> {
    Ok(TruncatedLaplace::new(mu, eps, gamma_bar)?.sample(rng))
}

pub fn trunc_laplace_variance(mu: f64, eps: f64, gamma_bar: f64) -> Result<f64, MechanismError> {
    Ok(TruncatedLaplace::new(mu, eps, gamma_bar)?.variance())
}
