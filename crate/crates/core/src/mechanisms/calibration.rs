// SPDX-License-Identifier: Apache-2.0

//! Noise calibration for the gradient-tracking solver and for the shuffled
//! average-consensus solver.

use num_bigint::BigInt;
use num_rational::BigRational;

use super::special::kappa_inv;
use super::trunc_laplace::TruncatedLaplace;
use super::MechanismError;
use crate::problem::ProblemShape;

/// `(eps, delta)` target and the adjacency radius `mu`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrivacyBudget {
    eps: f64,
    delta: f64,
    mu: f64,
}

impl PrivacyBudget {
    pub fn new(eps: f64, delta: f64, mu: f64) -> Result<Self, MechanismError> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(MechanismError::NonPositive { name: "epsilon", value: eps });
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(MechanismError::DeltaRange(delta));
        }
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(MechanismError::NonPositive { name: "mu", value: mu });
        }
        Ok(Self { eps, delta, mu })
    }

    pub fn epsilon(&self) -> f64 {
        self.eps
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Smallest Gaussian standard deviation giving `(eps, delta)` at sensitivity `mu`.
    pub fn gaussian_sigma(&self) -> f64 {
        self.mu / kappa_inv(self.eps, self.delta).expect("validated budget")
    }
}

/// Smallest admissible `delta` for truncated-Laplace noise with `mu = c * gamma_bar`:
/// `(e^eps - 1) / (2 (e^{eps/c} - 1))`, evaluated without overflow.
pub fn trunc_laplace_delta_floor(eps: f64, c: f64) -> f64 {
    let k = eps / c;
    0.5 * (eps - k).exp() * (-eps).exp_m1() / (-k).exp_m1()
}

/// How the truncation level is chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Truncation {
    /// `gamma_bar = d * lambda_min / (sqrt(n) m)` with `d` in `(0, 1)`.
    Margin(f64),
    /// Explicit `gamma_bar`; the margin `d` is implied.
    Level(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GtNoiseCalibration {
    pub budget: PrivacyBudget,
    pub gamma_bar: f64,
    /// `mu / gamma_bar`.
    pub c: f64,
    /// `gamma_bar sqrt(n) m / lambda_min`.
    pub d: f64,
    pub sigma_eta: f64,
    pub sigma_gamma_sq: f64,
    pub delta_floor: f64,
}

impl GtNoiseCalibration {
    pub fn laplace(&self) -> TruncatedLaplace {
        TruncatedLaplace::new(self.budget.mu(), self.budget.epsilon(), self.gamma_bar)
            .expect("calibrated parameters are positive")
    }

    /// Re-checks every feasibility condition.
    pub fn check(&self) -> Result<(), MechanismError> {
        if !(self.d > 0.0 && self.d < 1.0) {
            return Err(MechanismError::MarginRange(self.d));
        }
        if self.budget.mu() >= self.gamma_bar {
            return Err(MechanismError::AdjacencyTooLarge {
                mu: self.budget.mu(),
                gamma_bar: self.gamma_bar,
            });
        }
        let delta = self.budget.delta();
        if delta >= 0.5 {
            return Err(MechanismError::DeltaTooLarge(delta));
        }
        if delta < self.delta_floor {
            return Err(MechanismError::BelowFloor {
                delta,
                floor: self.delta_floor,
            });
        }
        if self.sigma_eta < self.budget.gaussian_sigma() * (1.0 - 1e-12) {
            return Err(MechanismError::SigmaTooSmall(self.sigma_eta));
        }
        Ok(())
    }
}

pub fn calibrate_gt(
    budget: PrivacyBudget,
    shape: ProblemShape,
    d: f64,
) -> Result<GtNoiseCalibration, MechanismError> {
    calibrate_gt_with(budget, shape, Truncation::Margin(d), true)
}

/// With `validate == false` the feasibility conditions are computed but not
/// enforced; only positivity of `gamma_bar` is required.
pub fn calibrate_gt_with(
    budget: PrivacyBudget,
    shape: ProblemShape,
    truncation: Truncation,
    validate: bool,
) -> Result<GtNoiseCalibration, MechanismError> {
    let per_entry = shape.lambda_min / ((shape.n as f64).sqrt() * shape.m as f64);
    let (gamma_bar, d) = match truncation {
        Truncation::Margin(d) => {
            if validate && !(d > 0.0 && d < 1.0) {
                return Err(MechanismError::MarginRange(d));
            }
            (d * per_entry, d)
        }
        Truncation::Level(g) => (g, g / per_entry),
    };
    if !(gamma_bar > 0.0 && gamma_bar.is_finite()) {
        return Err(MechanismError::NonPositive {
            name: "gamma_bar",
            value: gamma_bar,
        });
    }
    let c = budget.mu() / gamma_bar;
    let calib = GtNoiseCalibration {
        budget,
        gamma_bar,
        c,
        d,
        sigma_eta: budget.gaussian_sigma(),
        sigma_gamma_sq: TruncatedLaplace::new(budget.mu(), budget.epsilon(), gamma_bar)?.variance(),
        delta_floor: trunc_laplace_delta_floor(budget.epsilon(), c),
    };
    if validate {
        calib.check()?;
    }
    Ok(calib)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiShufCalibration {
    pub budget: PrivacyBudget,
    pub n: usize,
    pub a_bar: u64,
    pub g: f64,
    pub kappa_bar: f64,
    pub sigma_gamma: f64,
    pub alpha: f64,
    ln_one_minus_alpha: f64,
    ln_sigma_eta: f64,
}

impl DiShufCalibration {
    /// `ln(1 - alpha)`; finite even when `1 - alpha` underflows.
    pub fn ln_one_minus_alpha(&self) -> f64 {
        self.ln_one_minus_alpha
    }

    /// `ln sigma_eta`; the variance itself can exceed the `f64` range.
    pub fn ln_sigma_eta(&self) -> f64 {
        self.ln_sigma_eta
    }

    /// May be infinite for large networks; see [`Self::ln_sigma_eta`].
    pub fn sigma_eta(&self) -> f64 {
        self.ln_sigma_eta.exp()
    }

    pub fn sigma_eta_sq(&self) -> f64 {
        (2.0 * self.ln_sigma_eta).exp()
    }

    /// `n a_bar^2 + 1`.
    pub fn zeta_denominator(&self) -> u128 {
        self.n as u128 * (self.a_bar as u128).pow(2) + 1
    }

    pub fn zeta_exact(&self) -> BigRational {
        BigRational::new(BigInt::from(1), BigInt::from(self.zeta_denominator()))
    }

    pub fn zeta(&self) -> f64 {
        1.0 / self.zeta_denominator() as f64
    }
}

/// `ln(1 - alpha)` with `alpha = (1 - (2(n + a^-2))^{-(n-1)})^{1/(n-1)}`.
fn ln_one_minus_alpha(n: usize, a_bar: f64) -> f64 {
    let k = (n - 1) as f64;
    let ln_q = -k * (2.0 * (n as f64 + a_bar.powi(-2))).ln();
    if ln_q > -700.0 {
        let q = ln_q.exp();
        (-((-q).ln_1p() / k).exp_m1()).ln()
    } else {
        // 1 - (1 - q)^{1/k} = q/k + O(q^2)
        ln_q - k.ln()
    }
}

pub fn calibrate_dishuf(
    budget: PrivacyBudget,
    n: usize,
    a_bar: u64,
    g: f64,
) -> Result<DiShufCalibration, MechanismError> {
    if n < 3 {
        return Err(MechanismError::TooFewAgents(n));
    }
    if a_bar < 10 {
        return Err(MechanismError::ScalarBound(a_bar));
    }
    if !(g > 0.0 && g.is_finite()) {
        return Err(MechanismError::NonPositive { name: "g", value: g });
    }
    let kappa_bar = kappa_inv(budget.epsilon(), budget.delta())?;
    let nf = n as f64;
    let mu = budget.mu();
    let lnoma = ln_one_minus_alpha(n, a_bar as f64);
    let alpha = -lnoma.exp_m1();
    let gp = (1.0 + g) * (1.0 + g);
    let bracket = gp * mu * mu / (gp - 1.0) - gp * mu * mu / (nf * (nf - 1.0) * alpha * alpha);
    if !(bracket > 0.0) {
        return Err(MechanismError::InfeasibleG { g, n });
    }
    let ln_var =
        (nf - 1.0).ln() + 2.0 * alpha.ln() - 2.0 * lnoma - 2.0 * kappa_bar.ln() + bracket.ln();
    Ok(DiShufCalibration {
        budget,
        n,
        a_bar,
        g,
        kappa_bar,
        sigma_gamma: (1.0 + g) * mu / (nf.sqrt() * kappa_bar),
        alpha,
        ln_one_minus_alpha: lnoma,
        ln_sigma_eta: 0.5 * ln_var,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::One;

    fn section5() -> PrivacyBudget {
        PrivacyBudget::new(10.0, 0.2, 3.0).unwrap()
    }

    #[test]
    fn budget_validation() {
        assert!(PrivacyBudget::new(0.0, 0.1, 1.0).is_err());
        assert!(PrivacyBudget::new(1.0, 1.0, 1.0).is_err());
        assert!(PrivacyBudget::new(1.0, 0.1, -1.0).is_err());
    }

    #[test]
    fn floor_formula() {
        for (eps, c) in [(10.0, 0.9), (1.0, 0.5), (0.3, 0.99)] {
            let direct = (f64::exp(eps) - 1.0) / (2.0 * (f64::exp(eps / c) - 1.0));
            assert!((trunc_laplace_delta_floor(eps, c) - direct).abs() < 1e-14);
        }
        assert!(trunc_laplace_delta_floor(800.0, 0.5) == 0.0);
    }

    fn shape_for_gamma(gamma_bar: f64, d: f64) -> ProblemShape {
        // lambda_min chosen so that d * lambda_min / (sqrt(n) m) = gamma_bar.
        let (n, m) = (10, 3);
        ProblemShape {
            n,
            m,
            lambda_min: gamma_bar * (n as f64).sqrt() * m as f64 / d,
        }
    }

    #[test]
    fn gt_feasibility_at_c_09() {
        let gamma_bar = 1.0;
        let mu = 0.9 * gamma_bar;
        let floor = (f64::exp(10.0) - 1.0) / (2.0 * (f64::exp(10.0 / 0.9) - 1.0));
        let shape = shape_for_gamma(gamma_bar, 0.5);
        for delta in [0.36, floor * 1.001, floor * 0.999] {
            let b = PrivacyBudget::new(10.0, delta, mu).unwrap();
            let r = calibrate_gt(b, shape, 0.5);
            assert_eq!(r.is_ok(), delta >= floor, "delta={delta}");
            if let Ok(c) = r {
                assert!((c.gamma_bar - gamma_bar).abs() < 1e-12);
                assert!((c.c - 0.9).abs() < 1e-12);
                c.check().unwrap();
            } else {
                assert!(matches!(r, Err(MechanismError::BelowFloor { .. })));
            }
        }
    }

    #[test]
    fn gt_rejections() {
        let shape = shape_for_gamma(1.0, 0.5);
        let b = PrivacyBudget::new(10.0, 0.5, 0.9).unwrap();
        assert_eq!(calibrate_gt(b, shape, 0.5), Err(MechanismError::DeltaTooLarge(0.5)));
        let b = PrivacyBudget::new(10.0, 0.4, 1.0).unwrap();
        assert!(matches!(
            calibrate_gt(b, shape, 0.5),
            Err(MechanismError::AdjacencyTooLarge { .. })
        ));
        assert!(matches!(calibrate_gt(b, shape, 1.5), Err(MechanismError::MarginRange(_))));
    }

    #[test]
    fn section5_parameters_need_override() {
        let shape = shape_for_gamma(3.1, 0.5);
        let r = calibrate_gt_with(section5(), shape, Truncation::Level(3.1), true);
        assert!(matches!(r, Err(MechanismError::BelowFloor { .. })));
        let c = calibrate_gt_with(section5(), shape, Truncation::Level(3.1), false).unwrap();
        assert!((c.delta_floor - 0.358_7).abs() < 1e-3, "{}", c.delta_floor);
        assert!((c.d - 0.5).abs() < 1e-12);
        assert!((c.sigma_eta - 3.0 / 3.901_374_548_317_436).abs() < 1e-9);
    }

    #[test]
    fn dishuf_section5_values() {
        let c = calibrate_dishuf(section5(), 10, 100, 0.01).unwrap();
        // Independent high-precision evaluation of the same closed forms.
        assert!((c.sigma_gamma - DISHUF_SIGMA_GAMMA).abs() < 1e-12 * DISHUF_SIGMA_GAMMA);
        assert!((c.alpha - DISHUF_ALPHA).abs() < 1e-14);
        assert!((c.ln_one_minus_alpha() - DISHUF_LN_ONE_MINUS_ALPHA).abs() < 1e-9);
        assert!((c.ln_sigma_eta() - DISHUF_LN_SIGMA_ETA).abs() < 1e-9);
        assert_eq!(c.zeta_denominator(), 100_001);
        assert_eq!(c.zeta_exact() * BigRational::from_integer(c.zeta_denominator().into()), BigRational::one());
    }

    const DISHUF_SIGMA_GAMMA: f64 = 0.245_598_088_356_898_05;
    const DISHUF_ALPHA: f64 = 0.999_999_999_999_783;
    const DISHUF_LN_ONE_MINUS_ALPHA: f64 = -29.158_905_038_871_273;
    const DISHUF_LN_SIGMA_ETA: f64 = 31.958_157_060_554_214;

    #[test]
    fn large_networks_stay_in_log_domain() {
        for (n, ln_sigma, ln_gap) in [
            (50, 233.191_914_870_579_8, -229.545_257_411_429_1),
            (250, 1557.414_446_702_510_1, -1552.954_969_003_570_5),
        ] {
            let c = calibrate_dishuf(section5(), n, 100, 0.01).unwrap();
            assert!((c.ln_sigma_eta() - ln_sigma).abs() < 1e-9 * ln_sigma, "n={n}");
            assert!((c.ln_one_minus_alpha() - ln_gap).abs() < 1e-9 * ln_gap.abs(), "n={n}");
        }
        assert!(calibrate_dishuf(section5(), 250, 100, 0.01).unwrap().sigma_eta().is_infinite());
    }

    #[test]
    fn alpha_in_unit_interval() {
        // alpha itself rounds to 1 in f64 beyond small n, so the gap 1 - alpha
        // is checked through its logarithm.
        for n in 3..=500 {
            let mut prev = f64::NEG_INFINITY;
            for a_bar in [10u64, 100, 1000] {
                let c = calibrate_dishuf(section5(), n, a_bar, 0.01).unwrap();
                assert!(c.alpha > 0.0 && c.alpha <= 1.0);
                assert!(c.ln_one_minus_alpha().is_finite() && c.ln_one_minus_alpha() < 0.0);
                // larger a_bar shrinks the base, so 1 - alpha grows
                assert!(c.ln_one_minus_alpha() >= prev, "n={n} a_bar={a_bar}");
                prev = c.ln_one_minus_alpha();
            }
        }
    }

    #[test]
    fn dishuf_rejections() {
        assert!(matches!(
            calibrate_dishuf(section5(), 10, 100, 1e9),
            Err(MechanismError::InfeasibleG { .. })
        ));
        assert_eq!(calibrate_dishuf(section5(), 2, 100, 0.01), Err(MechanismError::TooFewAgents(2)));
        assert_eq!(calibrate_dishuf(section5(), 5, 9, 0.01), Err(MechanismError::ScalarBound(9)));
    }
}
