// SPDX-License-Identifier: Apache-2.0

//! Seeded Monte-Carlo trials. Each trial draws its own instance (unless a
//! fixture is configured) and noise from a private generator; trials run on
//! a worker pool and are returned in trial order.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use super::config::{ExperimentConfig, SolverKind};
use super::seeds::trial_rng;
use super::HarnessError;
use crate::graph::Network;
use crate::mechanisms::{calibrate_dishuf, calibrate_gt_with, DiShufCalibration, GtNoiseCalibration, PrivacyBudget};
use crate::problem::GlobalProblem;
use crate::scalar::dist_sq;
use crate::solvers::{dp_ac_baseline_solve, dp_dishuf_ac_solve, dp_gt_solve, SolveOutcome, SolverError};

#[derive(Clone, Debug, PartialEq)]
pub struct TrialRow {
    pub trial: usize,
    pub solver: SolverKind,
    pub n: usize,
    pub m: usize,
    pub eps: f64,
    pub delta: f64,
    pub mu: f64,
    /// `||x_hat - x*||^2`.
    pub error_sq: f64,
    /// `(1/n) sum_i ||x_i - x*||^2`.
    pub mean_agent_error_sq: f64,
    pub iters: usize,
    pub failed: bool,
    pub wall_seconds: f64,
    pub message: Option<String>,
    /// `||theta_hat - sum_i theta_i||^2` for the consensus solvers.
    pub theta_error_sq: Option<f64>,
    pub trajectory: Option<Vec<f64>>,
    pub transcript: Option<String>,
}

/// Everything shared by the trials of one configuration.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub network: Network,
    pub fixture: Option<GlobalProblem<f64>>,
    pub budget: PrivacyBudget,
    pub dishuf: Option<DiShufCalibration>,
}

impl Prepared {
    /// Checks the configuration, including the calibration on the first
    /// trial's instance, before any trial runs.
    pub fn new(config: &ExperimentConfig) -> Result<Self, HarnessError> {
        let seed = config.seed()?;
        let network = config.network()?;
        let fixture = config.fixture()?;
        let budget = config.budget()?;
        let dishuf = match config.solver {
            SolverKind::DishufAc => Some(calibrate_dishuf(budget, config.n, config.a_bar, config.g)?),
            _ => None,
        };
        let prepared = Self {
            config: config.clone(),
            seed,
            network,
            fixture,
            budget,
            dishuf,
        };
        if config.solver == SolverKind::Gt {
            let problem = prepared.instance(&mut trial_rng(seed, 0));
            prepared.gt_calibration(&problem)?;
        }
        Ok(prepared)
    }

    pub fn instance<R: Rng + ?Sized>(&self, rng: &mut R) -> GlobalProblem<f64> {
        match &self.fixture {
            Some(p) => p.clone(),
            None => self.config.generator().generate(self.config.n, rng),
        }
    }

    pub fn gt_calibration(&self, problem: &GlobalProblem<f64>) -> Result<GtNoiseCalibration, HarnessError> {
        Ok(calibrate_gt_with(
            self.budget,
            problem.shape(),
            self.config.truncation(),
            self.config.validate,
        )?)
    }
}

fn solve_one<R: Rng + ?Sized>(
    prepared: &Prepared,
    problem: &GlobalProblem<f64>,
    trajectory: bool,
    transcript: bool,
    rng: &mut R,
) -> Result<SolveOutcome, HarnessError> {
    let cfg = &prepared.config;
    let net = &prepared.network;
    Ok(match cfg.solver {
        SolverKind::Gt => {
            let calib = prepared.gt_calibration(problem)?;
            dp_gt_solve(problem, net, &calib, &cfg.gt_options(trajectory), rng)?
        }
        SolverKind::DishufAc => {
            let calib = prepared.dishuf.as_ref().expect("prepared for this solver");
            dp_dishuf_ac_solve(problem, net, calib, &cfg.ac_options(transcript), rng)?
        }
        SolverKind::AcBaseline => {
            dp_ac_baseline_solve(problem, net, prepared.budget.gaussian_sigma(), &cfg.ac_options(false), rng)?
        }
    })
}

/// Runs trial `trial`; solver failures are recorded in the row.
pub fn run_trial(prepared: &Prepared, trial: usize, trajectory: bool, transcript: bool) -> TrialRow {
    let cfg = &prepared.config;
    let start = Instant::now();
    let mut rng = trial_rng(prepared.seed, trial as u64);
    let problem = prepared.instance(&mut rng);
    let mut row = TrialRow {
        trial,
        solver: cfg.solver,
        n: cfg.n,
        m: cfg.m,
        eps: cfg.eps,
        delta: cfg.delta,
        mu: cfg.mu,
        error_sq: f64::NAN,
        mean_agent_error_sq: f64::NAN,
        iters: 0,
        failed: true,
        wall_seconds: 0.0,
        message: None,
        theta_error_sq: None,
        trajectory: None,
        transcript: None,
    };
    let result = solve_one(prepared, &problem, trajectory, transcript, &mut rng).and_then(|out| {
        let x_star = problem
            .exact_solution()
            .map_err(|e| HarnessError::Solver(SolverError::Problem(e)))?;
        Ok((out, x_star))
    });
    match result {
        Ok((out, x_star)) => {
            row.error_sq = out.error_sq(&x_star);
            row.mean_agent_error_sq = out.mean_agent_error_sq(&x_star);
            row.iters = out.iterations;
            row.failed = false;
            if cfg.solver != SolverKind::Gt {
                row.theta_error_sq = out.theta_hat().ok().map(|t| dist_sq(&t, &problem.theta_sum()));
            }
            row.trajectory = out.trajectory;
            row.transcript = out.transcript;
        }
        Err(e) => row.message = Some(e.to_string()),
    }
    row.wall_seconds = start.elapsed().as_secs_f64();
    row
}

/// Runs `f` on a pool of `jobs` threads (`None`: the pool default).
pub fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, HarnessError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        builder = builder.num_threads(j.max(1));
    }
    let pool = builder.build().map_err(|e| HarnessError::Pool(e.to_string()))?;
    Ok(pool.install(f))
}

/// All trials of `config`, in trial order.
pub fn monte_carlo(config: &ExperimentConfig, jobs: Option<usize>) -> Result<Vec<TrialRow>, HarnessError> {
    let prepared = Prepared::new(config)?;
    run_prepared(&prepared, jobs, false, false)
}

pub fn run_prepared(
    prepared: &Prepared,
    jobs: Option<usize>,
    trajectory: bool,
    transcript: bool,
) -> Result<Vec<TrialRow>, HarnessError> {
    let trials = prepared.config.trials;
    with_jobs(jobs, || {
        (0..trials)
            .into_par_iter()
            .map(|t| run_trial(prepared, t, trajectory, transcript && t == 0))
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(solver: SolverKind) -> ExperimentConfig {
        ExperimentConfig {
            solver,
            trials: 4,
            seed: Some(11),
            key_bits: Some(256),
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn rows_are_ordered_and_reproducible() {
        let c = cfg(SolverKind::AcBaseline);
        let a = monte_carlo(&c, Some(2)).unwrap();
        let b = monte_carlo(&c, Some(1)).unwrap();
        assert_eq!(a.iter().map(|r| r.trial).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.error_sq.to_bits(), y.error_sq.to_bits());
            assert!(!x.failed);
        }
    }

    #[test]
    fn single_trial_matches_batch() {
        let c = cfg(SolverKind::DishufAc);
        let batch = monte_carlo(&c, None).unwrap();
        let alone = run_trial(&Prepared::new(&c).unwrap(), 2, false, false);
        assert_eq!(alone.error_sq.to_bits(), batch[2].error_sq.to_bits());
    }

    #[test]
    fn infeasible_calibration_stops_before_trials() {
        let c = cfg(SolverKind::Gt);
        assert!(matches!(Prepared::new(&c), Err(HarnessError::Mechanism(_))));
        let ok = ExperimentConfig { validate: false, ..c };
        assert!(Prepared::new(&ok).is_ok());
    }

    #[test]
    fn noise_off_trials_are_exact() {
        for solver in SolverKind::ALL {
            let c = ExperimentConfig {
                noise_off: true,
                validate: false,
                gt_rounds: 20_000,
                ..cfg(solver)
            };
            for row in monte_carlo(&c, None).unwrap() {
                assert!(row.mean_agent_error_sq <= 1e-16, "{solver}: {row:?}");
            }
        }
    }
}
