// SPDX-License-Identifier: Apache-2.0

//! Configuration, seeded Monte-Carlo runner, CSV output, the experiment
//! drivers and the acceptance suite.

pub mod acceptance;
pub mod config;
pub mod csv;
pub mod experiments;
pub mod monte_carlo;
pub mod seeds;
pub mod stats;

use thiserror::Error;

use crate::graph::GraphError;
use crate::mechanisms::MechanismError;
use crate::paillier::PaillierError;
use crate::problem::ProblemError;
use crate::solvers::SolverError;

pub use config::{ExperimentConfig, GraphSpec, SolverKind};
pub use monte_carlo::{monte_carlo, run_trial, Prepared, TrialRow};
pub use seeds::{splitmix64, trial_seed};
pub use stats::Summary;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("invalid value `{value}` for `{key}`: {message}")]
    InvalidValue { key: String, value: String, message: String },
    #[error("{path}:{line}: {message}")]
    ConfigSyntax { path: String, line: usize, message: String },
    #[error("a seed is required (set `seed` or pass --seed)")]
    MissingSeed,
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("problem fixture has n = {fixture_n}, m = {fixture_m}; configuration says n = {n}, m = {m}")]
    FixtureShape { fixture_n: usize, fixture_m: usize, n: usize, m: usize },
    #[error("invalid CSV at line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("calibration rejected: {0} (pass --no-validate to run anyway)")]
    Mechanism(#[from] MechanismError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Paillier(#[from] PaillierError),
    #[error("could not start worker pool: {0}")]
    Pool(String),
}

pub(crate) fn read_file(path: &std::path::Path) -> Result<String, HarnessError> {
    std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub(crate) fn write_file(path: &std::path::Path, contents: &str) -> Result<(), HarnessError> {
    std::fs::write(path, contents).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })
}
