// SPDX-License-Identifier: Apache-2.0

pub mod cli;
pub mod dishuf;
pub mod graph;
pub mod harness;
pub mod linalg;
pub mod mechanisms;
pub mod paillier;
pub mod problem;
pub mod scalar;
pub mod solvers;
pub mod wide;

/// Working floating-point type.
pub type Real = f64;
/// Exact arithmetic used by oracles.
pub type Exact = num_rational::BigRational;
/// Least-squares problem over [`Real`].
pub type Problem = problem::GlobalProblem<Real>;
/// Local cost over [`Real`].
pub type Cost = problem::QuadraticCost<Real>;
/// Dense matrix over [`Real`].
pub type Matrix = linalg::DenseMatrix<Real>;
/// Fixed-point type used by the wide consensus path.
pub type Fixed = solvers::ac::ConsensusWide;
