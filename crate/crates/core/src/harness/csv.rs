// SPDX-License-Identifier: Apache-2.0

//! CSV persistence. Every file starts with a `#schema=` line naming its
//! layout and version, followed by the column header.

use std::fmt::Write as _;

use super::config::SolverKind;
use super::monte_carlo::TrialRow;
use super::HarnessError;

pub const TRIAL_SCHEMA: &str = "#schema=dpls-trials/1";
pub const TRIAL_HEADER: &str = "trial,solver,n,m,eps,delta,mu,error_sq,mean_agent_error_sq,iters,failed";
pub const TRAJECTORY_SCHEMA: &str = "#schema=dpls-trajectory/1";
pub const TRAJECTORY_HEADER: &str = "round,mean_sq_error";

pub fn write_trials(rows: &[TrialRow]) -> String {
    let mut out = format!("{TRIAL_SCHEMA}\n{TRIAL_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{:e},{:e},{},{}",
            r.trial,
            r.solver,
            r.n,
            r.m,
            r.eps,
            r.delta,
            r.mu,
            r.error_sq,
            r.mean_agent_error_sq,
            r.iters,
            u8::from(r.failed)
        );
    }
    out
}

/// Parsed trial-file row (the persisted columns only).
#[derive(Clone, Debug, PartialEq)]
pub struct CsvTrial {
    pub trial: usize,
    pub solver: SolverKind,
    pub n: usize,
    pub m: usize,
    pub eps: f64,
    pub delta: f64,
    pub mu: f64,
    pub error_sq: f64,
    pub mean_agent_error_sq: f64,
    pub iters: usize,
    pub failed: bool,
}

fn field<T: std::str::FromStr>(line: usize, name: &str, v: &str) -> Result<T, HarnessError> {
    v.parse().map_err(|_| HarnessError::Csv {
        line,
        message: format!("bad {name} `{v}`"),
    })
}

pub fn read_trials(text: &str) -> Result<Vec<CsvTrial>, HarnessError> {
    let mut lines = text.lines().enumerate();
    let bad = |line: usize, message: &str| HarnessError::Csv {
        line,
        message: message.into(),
    };
    match lines.next() {
        Some((_, l)) if l == TRIAL_SCHEMA => {}
        _ => return Err(bad(1, "missing or unsupported schema line")),
    }
    match lines.next() {
        Some((_, l)) if l == TRIAL_HEADER => {}
        _ => return Err(bad(2, "unexpected header")),
    }
    let mut rows = Vec::new();
    for (idx, l) in lines {
        let line = idx + 1;
        let f: Vec<&str> = l.split(',').collect();
        if f.len() != 11 {
            return Err(bad(line, "expected 11 fields"));
        }
        rows.push(CsvTrial {
            trial: field(line, "trial", f[0])?,
            solver: field(line, "solver", f[1])?,
            n: field(line, "n", f[2])?,
            m: field(line, "m", f[3])?,
            eps: field(line, "eps", f[4])?,
            delta: field(line, "delta", f[5])?,
            mu: field(line, "mu", f[6])?,
            error_sq: field(line, "error_sq", f[7])?,
            mean_agent_error_sq: field(line, "mean_agent_error_sq", f[8])?,
            iters: field(line, "iters", f[9])?,
            failed: field::<u8>(line, "failed", f[10])? == 1,
        });
    }
    Ok(rows)
}

pub fn write_trajectory(errors: &[f64]) -> String {
    let mut out = format!("{TRAJECTORY_SCHEMA}\n{TRAJECTORY_HEADER}\n");
    for (t, e) in errors.iter().enumerate() {
        let _ = writeln!(out, "{t},{e:e}");
    }
    out
}

pub fn read_trajectory(text: &str) -> Result<Vec<f64>, HarnessError> {
    let mut lines = text.lines().enumerate();
    let bad = |line: usize, message: &str| HarnessError::Csv {
        line,
        message: message.into(),
    };
    if lines.next().map(|(_, l)| l) != Some(TRAJECTORY_SCHEMA) {
        return Err(bad(1, "missing or unsupported schema line"));
    }
    if lines.next().map(|(_, l)| l) != Some(TRAJECTORY_HEADER) {
        return Err(bad(2, "unexpected header"));
    }
    lines
        .map(|(idx, l)| {
            let (round, value) = l.split_once(',').ok_or_else(|| bad(idx + 1, "expected 2 fields"))?;
            if field::<usize>(idx + 1, "round", round)? != idx - 2 {
                return Err(bad(idx + 1, "rounds must be consecutive from 0"));
            }
            field(idx + 1, "mean_sq_error", value)
        })
        .collect()
}
