// SPDX-License-Identifier: Apache-2.0

//! Privacy mechanisms: the Gaussian trade-off function, truncated Laplace
//! noise, budget calibration and a numerical privacy check.

pub mod calibration;
pub mod quadrature;
pub mod special;
pub mod trunc_laplace;
pub mod verify;

use thiserror::Error;

pub use calibration::{
    calibrate_dishuf, calibrate_gt, calibrate_gt_with, trunc_laplace_delta_floor, DiShufCalibration,
    GtNoiseCalibration, PrivacyBudget, Truncation,
};
pub use special::{kappa, kappa_inv, std_normal_cdf};
pub use trunc_laplace::{sample_trunc_laplace, trunc_laplace_variance, TruncatedLaplace};
pub use verify::{dp_verify_numeric, ScalarMechanism};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MechanismError {
    #[error("{name} must be positive and finite, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("delta must lie in (0, 1), got {0}")]
    DeltaRange(f64),
    #[error("delta = {0} violates delta < 1/2")]
    DeltaTooLarge(f64),
    #[error("delta = {delta} is below the truncated-Laplace floor (e^eps - 1)/(2(e^(eps/c) - 1)) = {floor}")]
    BelowFloor { delta: f64, floor: f64 },
    #[error("adjacency radius mu = {mu} must be below the truncation level gamma_bar = {gamma_bar}")]
    AdjacencyTooLarge { mu: f64, gamma_bar: f64 },
    #[error("truncation margin d = {0} must lie in (0, 1)")]
    MarginRange(f64),
    #[error("sigma_eta = {0} is below mu / kappa_inv(eps, delta)")]
    SigmaTooSmall(f64),
    #[error("g = {g} is too large for n = {n}: the shuffle-noise variance would be non-positive")]
    InfeasibleG { g: f64, n: usize },
    #[error("need at least 3 agents, got {0}")]
    TooFewAgents(usize),
    #[error("scalar bound a_bar = {0} must be at least 10")]
    ScalarBound(u64),
}
