// SPDX-License-Identifier: Apache-2.0

//! End-to-end private solvers: noisy gradient tracking, shuffled average
//! consensus, the unshuffled consensus baseline, and the mean-square error
//! bound for gradient tracking.

pub mod ac;
pub mod bound;
pub mod consensus;
pub mod gt;

use thiserror::Error;

use crate::dishuf::DiShufError;
use crate::linalg::{DenseMatrix, LinalgError};
use crate::mechanisms::MechanismError;
use crate::problem::{vectorize, ProblemError};
use crate::scalar::dist_sq;

pub use ac::{dp_ac_baseline_solve, dp_dishuf_ac_solve, AcOptions, Horizon, Precision};
pub use bound::theorem1_bound;
pub use consensus::{average_consensus, consensus_step, max_disagreement};
pub use gt::{dp_gt_solve, sample_gt_noise, GtNoise, GtOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
    #[error(transparent)]
    DiShuf(#[from] DiShufError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("problem has {problem} agents but the network has {network}")]
    AgentMismatch { problem: usize, network: usize },
    #[error("calibration is for n = {calibrated}, problem has {actual} agents")]
    CalibrationMismatch { calibrated: usize, actual: usize },
    #[error("step size beta must be positive and finite, got {0}")]
    Step(f64),
    #[error("iteration diverged at round {round} (error grew {growth:e}x); use a smaller beta")]
    Diverged { round: usize, growth: f64 },
    #[error("tracking identity drifted by {drift:e} (relative) at round {round}")]
    TrackingDrift { round: usize, drift: f64 },
    #[error("perturbation norm {norm} exceeds its support bound {bound}")]
    SupportViolation { norm: f64, bound: f64 },
    #[error("recovered matrix is singular after {attempts} attempts")]
    Singular { attempts: usize },
    #[error("agents still disagree by {disagreement:e} after {rounds} rounds (tolerance {tolerance:e}); increase the horizon")]
    NotConverged {
        rounds: usize,
        disagreement: f64,
        tolerance: f64,
    },
    #[error("initial states need {needed_bits} integer bits, fixed point offers {available_bits}")]
    Range { needed_bits: u64, available_bits: u64 },
    #[error("consensus would need {0} rounds, above the limit")]
    HorizonTooLong(usize),
}

/// Disables every privacy noise draw (oracle checks).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum NoiseMode {
    #[default]
    On,
    Off,
}

impl NoiseMode {
    pub fn is_on(self) -> bool {
        self == NoiseMode::On
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveOutcome {
    /// Average of the agents' final estimates.
    pub x_hat: Vec<f64>,
    pub agent_estimates: Vec<Vec<f64>>,
    /// Noisy global matrix the agents effectively solved with.
    pub a_hat: DenseMatrix<f64>,
    pub b_hat: Vec<f64>,
    pub iterations: usize,
    pub early_stopped: bool,
    /// Per-round mean-square error against the exact solution, round 0 first.
    pub trajectory: Option<Vec<f64>>,
    /// Per-round mean-square error against `-a_hat^{-1} b_hat`, round 0 first.
    pub fixed_point_trajectory: Option<Vec<f64>>,
    /// Whether `a_hat` is positive definite.
    pub perturbed_pd: bool,
    /// Full protocol runs used (2 after a singular retry).
    pub attempts: usize,
    /// Shuffle transcript dump followed by the audit verdict, when recorded.
    pub transcript: Option<String>,
}

impl SolveOutcome {
    pub fn error_sq(&self, x_star: &[f64]) -> f64 {
        dist_sq(&self.x_hat, x_star)
    }

    pub fn mean_agent_error_sq(&self, x_star: &[f64]) -> f64 {
        mean_sq_error(&self.agent_estimates, x_star)
    }

    /// Fixed point `-a_hat^{-1} b_hat` of the noisy system.
    pub fn noisy_solution(&self) -> Result<Vec<f64>, SolverError> {
        let neg: Vec<f64> = self.b_hat.iter().map(|v| -v).collect();
        Ok(self.a_hat.solve(&neg)?)
    }

    /// Recovered noisy data `[F(a_hat); b_hat]`.
    pub fn theta_hat(&self) -> Result<Vec<f64>, SolverError> {
        let mut t = vectorize(&self.a_hat)?;
        t.extend_from_slice(&self.b_hat);
        Ok(t)
    }
}

pub(crate) fn mean_sq_error(xs: &[Vec<f64>], x_star: &[f64]) -> f64 {
    xs.iter().map(|x| dist_sq(x, x_star)).sum::<f64>() / xs.len() as f64
}

pub(crate) fn is_positive_definite(a: &DenseMatrix<f64>) -> bool {
    crate::linalg::symmetric_eigenvalues(a).is_ok_and(|e| e[0] > 0.0)
}

pub(crate) fn check_sizes(problem_n: usize, network_n: usize) -> Result<(), SolverError> {
    if problem_n != network_n {
        return Err(SolverError::AgentMismatch {
            problem: problem_n,
            network: network_n,
        });
    }
    Ok(())
}
