// SPDX-License-Identifier: Apache-2.0

//! Experiment drivers: privacy-level sweep, network-size sweep and the
//! per-round error trajectory of gradient tracking.

use std::fmt::Write as _;

use super::config::{ExperimentConfig, SolverKind};
use super::monte_carlo::{run_prepared, Prepared, TrialRow};
use super::stats::Summary;
use super::HarnessError;

pub const DEFAULT_EPS_LIST: [f64; 5] = [0.5, 1.0, 2.0, 5.0, 10.0];
pub const DEFAULT_N_LIST: [usize; 3] = [10, 50, 250];

/// One configuration per `eps`, other settings shared.
pub fn sweep_eps(config: &ExperimentConfig, eps_list: &[f64], jobs: Option<usize>) -> Result<Vec<TrialRow>, HarnessError> {
    let mut rows = Vec::new();
    for &eps in eps_list {
        let cfg = ExperimentConfig { eps, ..config.clone() };
        rows.extend(run_prepared(&Prepared::new(&cfg)?, jobs, false, false)?);
    }
    Ok(rows)
}

/// Every solver at every network size.
pub fn sweep_n(
    config: &ExperimentConfig,
    n_list: &[usize],
    solvers: &[SolverKind],
    jobs: Option<usize>,
) -> Result<Vec<TrialRow>, HarnessError> {
    let mut rows = Vec::new();
    for &n in n_list {
        for &solver in solvers {
            let cfg = ExperimentConfig {
                n,
                solver,
                ..config.clone()
            };
            rows.extend(run_prepared(&Prepared::new(&cfg)?, jobs, false, false)?);
        }
    }
    Ok(rows)
}

/// Gradient-tracking runs with per-round errors; returns the round-wise mean
/// over successful trials (shorter runs are extended by their last value)
/// and the rows.
pub fn trajectory(config: &ExperimentConfig, jobs: Option<usize>) -> Result<(Vec<f64>, Vec<TrialRow>), HarnessError> {
    let cfg = ExperimentConfig {
        solver: SolverKind::Gt,
        ..config.clone()
    };
    let rows = run_prepared(&Prepared::new(&cfg)?, jobs, true, false)?;
    let curves: Vec<&Vec<f64>> = rows.iter().filter_map(|r| r.trajectory.as_ref()).collect();
    let len = curves.iter().map(|c| c.len()).max().unwrap_or(0);
    let mean = (0..len)
        .map(|t| {
            let total: f64 = curves.iter().map(|c| c[t.min(c.len() - 1)]).sum();
            total / curves.len() as f64
        })
        .collect();
    Ok((mean, rows))
}

/// Per-group statistics of `mean_agent_error_sq`, groups keyed by solver,
/// `n` and `eps` in order of first appearance.
pub fn summarize(rows: &[TrialRow]) -> Vec<((SolverKind, usize, f64), usize, Option<Summary>)> {
    let mut keys: Vec<(SolverKind, usize, f64)> = Vec::new();
    for r in rows {
        let k = (r.solver, r.n, r.eps);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|k| {
            let group: Vec<&TrialRow> = rows.iter().filter(|r| (r.solver, r.n, r.eps) == k).collect();
            let failed = group.iter().filter(|r| r.failed).count();
            let values: Vec<f64> = group.iter().filter(|r| !r.failed).map(|r| r.mean_agent_error_sq).collect();
            (k, failed, Summary::of(&values))
        })
        .collect()
}

pub fn summary_table(rows: &[TrialRow]) -> String {
    let mut out = String::from("solver        n     eps      ok  fail  mean          q1            median        q3\n");
    for ((solver, n, eps), failed, s) in summarize(rows) {
        match s {
            Some(s) => {
                let _ = writeln!(
                    out,
                    "{:<12} {:>4} {:>7} {:>6} {:>5}  {:<12.6e}  {:<12.6e}  {:<12.6e}  {:<12.6e}",
                    solver.name(),
                    n,
                    eps,
                    s.count,
                    failed,
                    s.mean,
                    s.q1,
                    s.median,
                    s.q3
                );
            }
            None => {
                let _ = writeln!(out, "{:<12} {:>4} {:>7} {:>6} {:>5}  (no successful trials)", solver.name(), n, eps, 0, failed);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> ExperimentConfig {
        ExperimentConfig {
            trials: 3,
            seed: Some(5),
            key_bits: Some(256),
            validate: false,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn sweep_groups_follow_request_order() {
        let rows = sweep_n(&base(), &[5, 6], &[SolverKind::AcBaseline, SolverKind::Gt], None).unwrap();
        let groups: Vec<_> = summarize(&rows).into_iter().map(|(k, _, _)| (k.0, k.1)).collect();
        assert_eq!(
            groups,
            vec![
                (SolverKind::AcBaseline, 5),
                (SolverKind::Gt, 5),
                (SolverKind::AcBaseline, 6),
                (SolverKind::Gt, 6)
            ]
        );
        assert!(summary_table(&rows).contains("ac-baseline"));
    }

    #[test]
    fn eps_sweep_has_one_group_per_value() {
        let rows = sweep_eps(&base(), &[1.0, 10.0], None).unwrap();
        assert_eq!(rows.len(), 6);
        assert_eq!(summarize(&rows).len(), 2);
    }

    #[test]
    fn trajectory_is_mean_of_runs() {
        let (mean, rows) = trajectory(&base(), None).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(mean.len(), rows.iter().map(|r| r.trajectory.as_ref().unwrap().len()).max().unwrap());
        let first: f64 = rows.iter().map(|r| r.trajectory.as_ref().unwrap()[0]).sum::<f64>() / 3.0;
        assert!((mean[0] - first).abs() <= 1e-12 * first);
        assert!(mean.last().unwrap() < &mean[0]);
    }
}
