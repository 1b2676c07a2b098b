// SPDX-License-Identifier: Apache-2.0

//! Average-consensus solvers. Each agent starts from its (perturbed) data
//! vector, the network averages, and every agent rebuilds the noisy global
//! system `A_hat x = -B_hat` from `n` times its consensus state.
//!
//! The shuffled variant adds `zeta Delta_i`, whose terms are far larger than
//! the data but cancel exactly across agents. When they exceed what `f64`
//! can carry without disturbing the data, consensus runs in wide fixed point.

use num_bigint::BigInt;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::consensus::{consensus_step, edge_weights, max_disagreement};
use super::{check_sizes, is_positive_definite, NoiseMode, SolveOutcome, SolverError};
use crate::dishuf::{audit_transcripts, key_bits_for, run_dishuf, DiShufParams};
use crate::graph::Network;
use crate::linalg::symmetric_eigenvalues;
use crate::mechanisms::DiShufCalibration;
use crate::paillier::{DEFAULT_FRAC_BITS, MIN_KEY_BITS};
use crate::problem::{devectorize, packed_len, GlobalProblem};
use crate::scalar::Scalar;
use crate::wide::{Wide, FRAC_BITS as WIDE_FRAC_BITS};

/// Fixed-point type used for wide consensus.
pub type ConsensusWide = Wide<8>;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Precision {
    /// `f64` unless the shuffle terms exceed [`DOUBLE_LIMIT`].
    #[default]
    Auto,
    Double,
    Wide,
}

/// Largest `|zeta Delta|` entry run in `f64` under [`Precision::Auto`].
pub const DOUBLE_LIMIT: f64 = 1024.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Horizon {
    Fixed(usize),
    /// Enough rounds to meet the tolerance from the spectral rate, at least
    /// `min_rounds`.
    Auto { min_rounds: usize, max_rounds: usize },
}

impl Default for Horizon {
    fn default() -> Self {
        Horizon::Auto {
            min_rounds: 500,
            max_rounds: 5_000_000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AcOptions {
    pub horizon: Horizon,
    /// Allowed `max_{i,j} ||y_i - y_j||_inf` at the end.
    pub tolerance: f64,
    pub precision: Precision,
    pub noise: NoiseMode,
    /// Paillier modulus size; `None` sizes it from the noise scale.
    pub key_bits: Option<u64>,
    pub frac_bits: u32,
    pub record_transcript: bool,
}

impl Default for AcOptions {
    fn default() -> Self {
        Self {
            horizon: Horizon::default(),
            tolerance: 1e-10,
            precision: Precision::Auto,
            noise: NoiseMode::On,
            key_bits: None,
            frac_bits: DEFAULT_FRAC_BITS,
            record_transcript: false,
        }
    }
}

enum States {
    Double(Vec<Vec<f64>>),
    Wide(Vec<Vec<ConsensusWide>>),
}

fn spread<T: Scalar>(y: &[Vec<T>]) -> f64 {
    let n = y.len() as f64;
    let dim = y.first().map_or(0, Vec::len);
    (0..dim)
        .map(|k| {
            let vals: Vec<f64> = y.iter().map(|r| r[k].to_f64()).collect();
            let mean = vals.iter().sum::<f64>() / n;
            vals.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

fn rounds_for(net: &Network, spread: f64, opts: &AcOptions) -> Result<usize, SolverError> {
    match opts.horizon {
        Horizon::Fixed(t) => Ok(t),
        Horizon::Auto { min_rounds, max_rounds } => {
            let factor = opts.tolerance / (2.0 * (net.n() as f64).sqrt() * spread);
            let needed = if factor < 1.0 { net.rounds_to_contract(factor) } else { 0 };
            let t = needed.max(min_rounds);
            if t > max_rounds {
                return Err(SolverError::HorizonTooLong(t));
            }
            Ok(t)
        }
    }
}

fn run<T: Scalar>(net: &Network, mut y: Vec<Vec<T>>, opts: &AcOptions) -> Result<(Vec<Vec<f64>>, usize), SolverError> {
    let rounds = rounds_for(net, spread(&y), opts)?;
    let weights = edge_weights::<T>(net);
    let mut scratch = y.clone();
    for _ in 0..rounds {
        consensus_step(net, &weights, &mut y, &mut scratch);
    }
    let disagreement = max_disagreement(&y);
    if !(disagreement <= opts.tolerance) {
        return Err(SolverError::NotConverged {
            rounds,
            disagreement,
            tolerance: opts.tolerance,
        });
    }
    let n = net.n() as f64;
    let theta_hats = y
        .iter()
        .map(|row| row.iter().map(|v| n * v.to_f64()).collect())
        .collect();
    Ok((theta_hats, rounds))
}

enum Attempt {
    Solved(SolveOutcome),
    Singular,
}

fn finish(m: usize, theta_hats: Vec<Vec<f64>>, rounds: usize, opts: &AcOptions) -> Result<Attempt, SolverError> {
    let n = theta_hats.len();
    let p = packed_len(m);
    let mut estimates = Vec::with_capacity(n);
    let mut first = None;
    for theta in &theta_hats {
        let a = devectorize(&theta[..p])?;
        let b = theta[p..].to_vec();
        let eig = symmetric_eigenvalues(&a)?;
        let smallest = eig.iter().fold(f64::INFINITY, |acc, v| acc.min(v.abs()));
        let largest = eig.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let floor = (n * m) as f64 * opts.tolerance + 1e-12 * largest;
        if !(smallest > floor) {
            return Ok(Attempt::Singular);
        }
        let neg: Vec<f64> = b.iter().map(|v| -v).collect();
        match a.solve(&neg) {
            Ok(x) => estimates.push(x),
            Err(_) => return Ok(Attempt::Singular),
        }
        if first.is_none() {
            first = Some((a, b));
        }
    }
    let (a_hat, b_hat) = first.expect("at least one agent");
    let x_hat = (0..m)
        .map(|k| estimates.iter().map(|x| x[k]).sum::<f64>() / n as f64)
        .collect();
    Ok(Attempt::Solved(SolveOutcome {
        x_hat,
        agent_estimates: estimates,
        perturbed_pd: is_positive_definite(&a_hat),
        a_hat,
        b_hat,
        iterations: rounds,
        early_stopped: false,
        trajectory: None,
        fixed_point_trajectory: None,
        attempts: 1,
        transcript: None,
    }))
}

fn with_retry(mut attempt: impl FnMut() -> Result<Attempt, SolverError>) -> Result<SolveOutcome, SolverError> {
    for k in 1..=2 {
        if let Attempt::Solved(mut out) = attempt()? {
            out.attempts = k;
            return Ok(out);
        }
    }
    Err(SolverError::Singular { attempts: 2 })
}

fn add_gaussian<R: Rng + ?Sized>(thetas: &mut [Vec<f64>], sigma: f64, noise: NoiseMode, rng: &mut R) {
    if !noise.is_on() {
        return;
    }
    let gauss = Normal::new(0.0, sigma).expect("calibrated sigma is finite");
    for row in thetas {
        row.iter_mut().for_each(|v| *v += gauss.sample(rng));
    }
}

fn plain_thetas(problem: &GlobalProblem<f64>) -> Vec<Vec<f64>> {
    problem.thetas().into_iter().map(|t| t.into_vec()).collect()
}

/// Shuffled consensus: DiShuf perturbations, Gaussian `gamma_i`, consensus,
/// local solve, and one full rerun if the recovered matrix is singular.
pub fn dp_dishuf_ac_solve<R: Rng + ?Sized>(
    problem: &GlobalProblem<f64>,
    net: &Network,
    calib: &DiShufCalibration,
    opts: &AcOptions,
    rng: &mut R,
) -> Result<SolveOutcome, SolverError> {
    check_sizes(problem.n(), net.n())?;
    if calib.n != problem.n() {
        return Err(SolverError::CalibrationMismatch {
            calibrated: calib.n,
            actual: problem.n(),
        });
    }
    let m = problem.dim();
    let thetas = plain_thetas(problem);
    let ln_sigma_eta = opts.noise.is_on().then(|| calib.ln_sigma_eta());
    let data_bound = thetas.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
    let key_bits = opts.key_bits.unwrap_or_else(|| {
        key_bits_for(ln_sigma_eta.unwrap_or(f64::NEG_INFINITY), data_bound, calib.a_bar, opts.frac_bits, 40.0)
            .max(MIN_KEY_BITS)
    });
    let params = DiShufParams {
        a_bar: calib.a_bar,
        key_bits,
        frac_bits: opts.frac_bits,
        record_transcript: opts.record_transcript,
    };
    let zeta_den = BigInt::from(calib.zeta_denominator());
    if let (Some(ln_sigma), false) = (ln_sigma_eta, matches!(opts.precision, Precision::Double)) {
        // Rough size of the largest shuffle term, checked before any key generation.
        let ln_term = ln_sigma + (2.0 * 40.0 * calib.a_bar as f64 * calib.zeta()).ln();
        let needed = (ln_term / std::f64::consts::LN_2).ceil().max(0.0) as u64 + 2;
        let available = 64 * 8 - 2 - WIDE_FRAC_BITS as u64;
        if needed > available {
            return Err(SolverError::Range {
                needed_bits: needed,
                available_bits: available,
            });
        }
    }
    with_retry(|| {
        let shuffled = run_dishuf(net, &thetas, ln_sigma_eta, &params, rng)?;
        let mut base = thetas.clone();
        add_gaussian(&mut base, calib.sigma_gamma, opts.noise, rng);
        let shuffle_terms: Vec<Vec<f64>> = (0..net.n())
            .map(|i| {
                shuffled
                    .delta_scaled(i)
                    .iter()
                    .map(|d| f64::from_scaled_int(d, opts.frac_bits) / calib.zeta_denominator() as f64)
                    .collect()
            })
            .collect();
        let largest = shuffle_terms.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
        let wide = match opts.precision {
            Precision::Double => false,
            Precision::Wide => true,
            Precision::Auto => !(largest <= DOUBLE_LIMIT),
        };
        let states = if wide {
            let available = 64 * 8 - 2 - WIDE_FRAC_BITS as u64;
            let mut rows = Vec::with_capacity(net.n());
            for (i, row) in base.iter().enumerate() {
                let mut out = Vec::with_capacity(row.len());
                for (k, &v) in row.iter().enumerate() {
                    let raw = (shuffled.delta_scaled(i)[k].clone() << (WIDE_FRAC_BITS - opts.frac_bits)) / &zeta_den;
                    let needed = raw.bits().saturating_sub(WIDE_FRAC_BITS as u64) + 2;
                    if needed > available || v.abs() >= ConsensusWide::max_magnitude() / 4.0 {
                        return Err(SolverError::Range {
                            needed_bits: needed,
                            available_bits: available,
                        });
                    }
                    out.push(ConsensusWide::from_raw(&raw) + ConsensusWide::from_f64(v));
                }
                rows.push(out);
            }
            States::Wide(rows)
        } else {
            States::Double(
                base.iter()
                    .zip(&shuffle_terms)
                    .map(|(b, s)| b.iter().zip(s).map(|(x, z)| x + z).collect())
                    .collect(),
            )
        };
        let (theta_hats, rounds) = match states {
            States::Double(y) => run(net, y, opts)?,
            States::Wide(y) => run(net, y, opts)?,
        };
        let mut attempt = finish(m, theta_hats, rounds, opts)?;
        if let (Attempt::Solved(out), true) = (&mut attempt, opts.record_transcript) {
            let verdict = match audit_transcripts(net, &shuffled) {
                Ok(()) => "audit: ok".to_string(),
                Err(e) => format!("audit: FAILED {e}"),
            };
            out.transcript = Some(format!("{}{verdict}\n", shuffled.dump_transcripts()));
        }
        Ok(attempt)
    })
}

/// Consensus on `theta_i + gamma_i` with `gamma_i ~ N(0, sigma^2)` per entry,
/// without shuffling.
pub fn dp_ac_baseline_solve<R: Rng + ?Sized>(
    problem: &GlobalProblem<f64>,
    net: &Network,
    sigma: f64,
    opts: &AcOptions,
    rng: &mut R,
) -> Result<SolveOutcome, SolverError> {
    check_sizes(problem.n(), net.n())?;
    let m = problem.dim();
    let thetas = plain_thetas(problem);
    with_retry(|| {
        let mut y = thetas.clone();
        add_gaussian(&mut y, sigma, opts.noise, rng);
        let (theta_hats, rounds) = match opts.precision {
            Precision::Wide => run(
                net,
                y.iter().map(|r| r.iter().map(|&v| ConsensusWide::from_f64(v)).collect()).collect(),
                opts,
            )?,
            Precision::Auto | Precision::Double => run(net, y, opts)?,
        };
        finish(m, theta_hats, rounds, opts)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_cycle;
    use crate::mechanisms::{calibrate_dishuf, PrivacyBudget};
    use crate::problem::{InstanceGenerator, QuadraticCost};
    use crate::scalar::dist_sq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn setup(n: usize, seed: u64) -> (GlobalProblem<f64>, Network, DiShufCalibration, ChaCha20Rng) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let problem = InstanceGenerator::normalized(3, n, 40.0, 1.0, 100.0).generate(n, &mut rng);
        let net = build_cycle(n, 0.3).unwrap();
        let budget = PrivacyBudget::new(10.0, 0.2, 3.0).unwrap();
        let calib = calibrate_dishuf(budget, n, 100, 0.01).unwrap();
        (problem, net, calib, rng)
    }

    fn off() -> AcOptions {
        AcOptions {
            noise: NoiseMode::Off,
            key_bits: Some(256),
            ..AcOptions::default()
        }
    }

    #[test]
    fn noise_off_recovers_solution() {
        let (problem, net, calib, mut rng) = setup(10, 1);
        let x_star = problem.exact_solution().unwrap();
        let out = dp_dishuf_ac_solve(&problem, &net, &calib, &off(), &mut rng).unwrap();
        assert!(dist_sq(&out.x_hat, &x_star).sqrt() <= 1e-8);
        let base = dp_ac_baseline_solve(&problem, &net, 1.0, &off(), &mut rng).unwrap();
        assert!(dist_sq(&base.x_hat, &x_star).sqrt() <= 1e-8);
    }

    #[test]
    fn oversized_shuffle_noise_is_rejected_before_keygen() {
        let (problem, net, calib, mut rng) = setup(250, 6);
        let start = std::time::Instant::now();
        let r = dp_dishuf_ac_solve(&problem, &net, &calib, &AcOptions::default(), &mut rng);
        assert!(matches!(r, Err(SolverError::Range { needed_bits, .. }) if needed_bits > 2000), "{r:?}");
        assert!(start.elapsed().as_secs_f64() < 1.0);
    }

    #[test]
    fn wide_and_double_agree_without_noise() {
        let (problem, net, calib, _) = setup(5, 2);
        let run_with = |precision| {
            let opts = AcOptions { precision, ..off() };
            dp_dishuf_ac_solve(&problem, &net, &calib, &opts, &mut ChaCha20Rng::seed_from_u64(3)).unwrap()
        };
        let a = run_with(Precision::Double);
        let b = run_with(Precision::Wide);
        assert!(dist_sq(&a.x_hat, &b.x_hat).sqrt() < 1e-9);
    }

    #[test]
    fn noisy_run_uses_wide_and_agents_agree() {
        let (problem, net, calib, mut rng) = setup(10, 4);
        let opts = AcOptions {
            key_bits: Some(256),
            ..AcOptions::default()
        };
        let out = dp_dishuf_ac_solve(&problem, &net, &calib, &opts, &mut rng).unwrap();
        assert!(out.iterations >= 500);
        let spread = out
            .agent_estimates
            .iter()
            .map(|x| dist_sq(x, &out.x_hat).sqrt())
            .fold(0.0, f64::max);
        assert!(spread < 1e-6, "{spread}");
        // The huge shuffle terms cancel: recovered data is within a few noise
        // standard deviations of the truth.
        let truth = problem.theta_sum();
        let err = dist_sq(&out.theta_hat().unwrap(), &truth);
        let expected = 9.0 * 10.0 * calib.sigma_gamma * calib.sigma_gamma;
        assert!(err < 20.0 * expected, "{err} vs {expected}");
    }

    #[test]
    fn short_horizon_is_reported() {
        let (problem, net, calib, mut rng) = setup(10, 5);
        let opts = AcOptions {
            horizon: Horizon::Fixed(5),
            ..off()
        };
        let r = dp_dishuf_ac_solve(&problem, &net, &calib, &opts, &mut rng);
        assert!(matches!(r, Err(SolverError::NotConverged { .. })), "{r:?}");
    }

    #[test]
    fn singular_system_retries_once_then_fails() {
        let n = 4;
        let costs = (0..n)
            .map(|i| QuadraticCost::from_packed(vec![1.0, 1.0, 0.0, 1.0, 0.0, 0.0], vec![i as f64, 0.0, 0.0], 0.0).unwrap())
            .collect();
        let problem = GlobalProblem::new_unchecked(costs).unwrap();
        let net = build_cycle(n, 0.3).unwrap();
        let budget = PrivacyBudget::new(10.0, 0.2, 3.0).unwrap();
        let calib = calibrate_dishuf(budget, n, 100, 0.01).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let r = dp_dishuf_ac_solve(&problem, &net, &calib, &off(), &mut rng);
        assert_eq!(r.unwrap_err(), SolverError::Singular { attempts: 2 });
        let r = dp_ac_baseline_solve(&problem, &net, 1.0, &off(), &mut rng);
        assert_eq!(r.unwrap_err(), SolverError::Singular { attempts: 2 });
    }
}
