// SPDX-License-Identifier: Apache-2.0

//! Mean-square error bound for the noisy gradient-tracking limit.

use super::SolverError;
use crate::mechanisms::{GtNoiseCalibration, MechanismError};
use crate::problem::GlobalProblem;
use crate::scalar::norm_sq;

/// Inputs of the bound, separated from problem and calibration objects.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundTerms {
    pub n: usize,
    pub m: usize,
    pub sigma_gamma_sq: f64,
    pub sigma_eta_sq: f64,
    pub margin: f64,
    pub lambda_min: f64,
    pub solution_norm_sq: f64,
}

impl BoundTerms {
    /// `(2 n m^2 sg^2 ||x*||^2 + 2 n m se^2) / ((1 - d)^2 lambda^2)`.
    pub fn evaluate(&self) -> Result<f64, SolverError> {
        if !(self.margin > 0.0 && self.margin < 1.0) {
            return Err(MechanismError::MarginRange(self.margin).into());
        }
        let (n, m) = (self.n as f64, self.m as f64);
        let numer = 2.0 * n * m * m * self.sigma_gamma_sq * self.solution_norm_sq + 2.0 * n * m * self.sigma_eta_sq;
        let denom = (1.0 - self.margin).powi(2) * self.lambda_min.powi(2);
        Ok(numer / denom)
    }
}

/// Bound on `E ||x(inf) - x*||^2` for the given problem and calibration.
pub fn theorem1_bound(problem: &GlobalProblem<f64>, calib: &GtNoiseCalibration) -> Result<f64, SolverError> {
    let x_star = problem.exact_solution()?;
    BoundTerms {
        n: problem.n(),
        m: problem.dim(),
        sigma_gamma_sq: calib.sigma_gamma_sq,
        sigma_eta_sq: calib.sigma_eta * calib.sigma_eta,
        margin: calib.d,
        lambda_min: problem.lambda_min(),
        solution_norm_sq: norm_sq(&x_star),
    }
    .evaluate()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn terms() -> BoundTerms {
        BoundTerms {
            n: 10,
            m: 3,
            sigma_gamma_sq: 0.18,
            sigma_eta_sq: 0.6,
            margin: 0.7,
            lambda_min: 40.0,
            solution_norm_sq: 2.0,
        }
    }

    #[test]
    fn zero_noise_gives_zero() {
        let t = BoundTerms {
            sigma_gamma_sq: 0.0,
            sigma_eta_sq: 0.0,
            ..terms()
        };
        assert_eq!(t.evaluate().unwrap(), 0.0);
    }

    #[test]
    fn linear_in_n() {
        let one = terms().evaluate().unwrap();
        let two = BoundTerms { n: 20, ..terms() }.evaluate().unwrap();
        assert!((two / one - 2.0).abs() < 1e-14);
    }

    #[test]
    fn hand_value() {
        // (2*10*9*0.18*2 + 2*10*3*0.6) / (0.09 * 1600) = (64.8 + 36) / 144
        let v = terms().evaluate().unwrap();
        assert!((v - 100.8 / 144.0).abs() < 1e-14);
    }

    #[test]
    fn margin_outside_unit_interval_is_rejected() {
        for margin in [0.0, 1.0, 1.3] {
            assert!(BoundTerms { margin, ..terms() }.evaluate().is_err());
        }
    }
}
