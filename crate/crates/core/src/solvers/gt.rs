// SPDX-License-Identifier: Apache-2.0

//! Gradient tracking on noisy local data `G_i = F^{-1}(theta_i^A + gamma_i)`,
//! `H_i = B_i + eta_i`:
//!
//! ```text
//! x_i <- x_i + sum_j w_ij (x_j - x_i) - beta s_i
//! s_i <- s_i + sum_j w_ij (s_j - s_i) + G_i (x_i_new - x_i_old)
//! ```
//!
//! started from `x_i = 0`, `s_i = H_i`.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{check_sizes, is_positive_definite, mean_sq_error, NoiseMode, SolveOutcome, SolverError};
use crate::graph::Network;
use crate::linalg::DenseMatrix;
use crate::mechanisms::GtNoiseCalibration;
use crate::problem::{devectorize, packed_len, GlobalProblem};
use crate::scalar::{add_vec, norm_sq, sub_vec};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GtOptions {
    pub beta: f64,
    pub rounds: usize,
    pub noise: NoiseMode,
    pub record_trajectory: bool,
    /// Stop once `max_i ||x_i(t+1) - x_i(t)||_inf` falls below this.
    pub stop_tolerance: f64,
    /// Verify `sum s_i = sum (G_i x_i + H_i)` every round.
    pub check_tracking: bool,
}

impl Default for GtOptions {
    fn default() -> Self {
        Self {
            beta: 0.005,
            rounds: 2000,
            noise: NoiseMode::On,
            record_trajectory: false,
            stop_tolerance: 1e-12,
            check_tracking: true,
        }
    }
}

const DIVERGENCE_FACTOR: f64 = 1e6;
const TRACKING_TOLERANCE: f64 = 1e-9;

/// Privacy noise of every agent: packed `gamma_i` and `eta_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct GtNoise {
    pub gamma: Vec<Vec<f64>>,
    pub eta: Vec<Vec<f64>>,
}

impl GtNoise {
    /// `Omega_A = sum_i F^{-1}(gamma_i)`.
    pub fn omega_a(&self) -> DenseMatrix<f64> {
        let packed = sum_vectors(&self.gamma);
        devectorize(&packed).expect("packed length")
    }

    /// `Omega_B = sum_i eta_i`.
    pub fn omega_b(&self) -> Vec<f64> {
        sum_vectors(&self.eta)
    }
}

/// Draws `gamma_i` (truncated Laplace, packed) then `eta_i` (Gaussian), agent
/// by agent, in the order the solver consumes them.
pub fn sample_gt_noise<R: Rng + ?Sized>(n: usize, m: usize, calib: &GtNoiseCalibration, rng: &mut R) -> GtNoise {
    let laplace = calib.laplace();
    let gauss = Normal::new(0.0, calib.sigma_eta).expect("calibrated sigma is positive and finite");
    let mut gamma = Vec::with_capacity(n);
    let mut eta = Vec::with_capacity(n);
    for _ in 0..n {
        gamma.push((0..packed_len(m)).map(|_| laplace.sample(rng)).collect());
        eta.push((0..m).map(|_| gauss.sample(rng)).collect());
    }
    GtNoise { gamma, eta }
}

struct LocalData {
    g: Vec<DenseMatrix<f64>>,
    h: Vec<Vec<f64>>,
}

fn perturb<R: Rng + ?Sized>(
    problem: &GlobalProblem<f64>,
    calib: &GtNoiseCalibration,
    noise: NoiseMode,
    rng: &mut R,
) -> Result<LocalData, SolverError> {
    let m = problem.dim();
    let drawn = noise.is_on().then(|| sample_gt_noise(problem.n(), m, calib, rng));
    let mut g = Vec::with_capacity(problem.n());
    let mut h = Vec::with_capacity(problem.n());
    for (i, cost) in problem.costs().iter().enumerate() {
        let mut packed = cost.a_packed().to_vec();
        let mut b = cost.b().to_vec();
        if let Some(d) = &drawn {
            packed = add_vec(&packed, &d.gamma[i]);
            b = add_vec(&b, &d.eta[i]);
        }
        g.push(devectorize(&packed)?);
        h.push(b);
    }
    Ok(LocalData { g, h })
}

fn sum_matrices(ms: &[DenseMatrix<f64>]) -> DenseMatrix<f64> {
    let m = ms[0].rows();
    ms.iter()
        .fold(DenseMatrix::zeros(m, m), |acc, g| acc.add(g))
}

fn sum_vectors(vs: &[Vec<f64>]) -> Vec<f64> {
    vs.iter().fold(vec![0.0; vs[0].len()], |acc, v| add_vec(&acc, v))
}

fn mix(net: &Network, v: &[Vec<f64>], i: usize) -> Vec<f64> {
    let mut out = v[i].clone();
    for &(j, w) in net.neighbors(i) {
        for (o, (a, b)) in out.iter_mut().zip(v[j].iter().zip(&v[i])) {
            *o += w * (a - b);
        }
    }
    out
}

pub fn dp_gt_solve<R: Rng + ?Sized>(
    problem: &GlobalProblem<f64>,
    net: &Network,
    calib: &GtNoiseCalibration,
    opts: &GtOptions,
    rng: &mut R,
) -> Result<SolveOutcome, SolverError> {
    check_sizes(problem.n(), net.n())?;
    if !(opts.beta > 0.0 && opts.beta.is_finite()) {
        return Err(SolverError::Step(opts.beta));
    }
    let n = problem.n();
    let m = problem.dim();
    let x_star = problem.exact_solution()?;
    let LocalData { g, h } = perturb(problem, calib, opts.noise, rng)?;
    let a_hat = sum_matrices(&g);
    let b_hat = sum_vectors(&h);
    let omega_a = a_hat.sub(problem.a());
    let bound = (m * n) as f64 * calib.gamma_bar;
    let omega_norm = omega_a.frobenius_sq().sqrt();
    if opts.noise.is_on() && omega_norm > bound {
        return Err(SolverError::SupportViolation {
            norm: omega_norm,
            bound,
        });
    }

    let mut x = vec![vec![0.0; m]; n];
    let mut s = h.clone();
    let fixed_point = a_hat.solve(&b_hat.iter().map(|v| -v).collect::<Vec<_>>()).ok();
    let mut trajectory = opts.record_trajectory.then(Vec::new);
    let mut fixed_trajectory = opts.record_trajectory.then(Vec::new);
    let initial = mean_sq_error(&x, &x_star).max(f64::MIN_POSITIVE);
    let mut record = |x: &[Vec<f64>], mse: f64| {
        if let Some(t) = trajectory.as_mut() {
            t.push(mse);
        }
        if let (Some(t), Some(fp)) = (fixed_trajectory.as_mut(), fixed_point.as_ref()) {
            t.push(mean_sq_error(x, fp));
        }
    };
    record(&x, initial);
    let mut iterations = 0;
    let mut early_stopped = false;
    while iterations < opts.rounds {
        let x_new: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut v = mix(net, &x, i);
                v.iter_mut().zip(&s[i]).for_each(|(a, b)| *a -= opts.beta * b);
                v
            })
            .collect();
        let s_new: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let step: Vec<f64> = x_new[i].iter().zip(&x[i]).map(|(a, b)| a - b).collect();
                let correction = g[i].mul_vec(&step).expect("sized");
                add_vec(&mix(net, &s, i), &correction)
            })
            .collect();
        iterations += 1;
        let change = x_new
            .iter()
            .zip(&x)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(p, q)| (p - q).abs()))
            .fold(0.0, f64::max);
        x = x_new;
        s = s_new;

        if opts.check_tracking {
            let mut scale = 0.0;
            let mut target = vec![0.0; m];
            for i in 0..n {
                let gx = g[i].mul_vec(&x[i]).expect("sized");
                scale += norm_sq(&gx).sqrt() + norm_sq(&h[i]).sqrt() + norm_sq(&s[i]).sqrt();
                target = add_vec(&target, &add_vec(&gx, &h[i]));
            }
            let tracked = sum_vectors(&s);
            let drift = norm_sq(&sub_vec(&tracked, &target)).sqrt() / scale.max(f64::MIN_POSITIVE);
            if drift > TRACKING_TOLERANCE {
                return Err(SolverError::TrackingDrift {
                    round: iterations,
                    drift,
                });
            }
        }
        let mse = mean_sq_error(&x, &x_star);
        if !mse.is_finite() || mse > DIVERGENCE_FACTOR * initial {
            return Err(SolverError::Diverged {
                round: iterations,
                growth: mse / initial,
            });
        }
        record(&x, mse);
        if change < opts.stop_tolerance {
            early_stopped = true;
            break;
        }
    }
    let x_hat = sum_vectors(&x).into_iter().map(|v| v / n as f64).collect();
    Ok(SolveOutcome {
        x_hat,
        agent_estimates: x,
        perturbed_pd: is_positive_definite(&a_hat),
        a_hat,
        b_hat,
        iterations,
        early_stopped,
        trajectory,
        fixed_point_trajectory: fixed_point.and(fixed_trajectory),
        attempts: 1,
        transcript: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_cycle;
    use crate::mechanisms::{calibrate_gt_with, PrivacyBudget, Truncation};
    use crate::problem::InstanceGenerator;
    use crate::scalar::dist_sq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn setup(n: usize, seed: u64) -> (GlobalProblem<f64>, Network, GtNoiseCalibration, ChaCha20Rng) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let problem = InstanceGenerator::normalized(3, n, 40.0, 1.0, 100.0).generate(n, &mut rng);
        let net = build_cycle(n, 0.3).unwrap();
        let budget = PrivacyBudget::new(10.0, 0.2, 3.0).unwrap();
        let calib = calibrate_gt_with(budget, problem.shape(), Truncation::Level(3.1), false).unwrap();
        (problem, net, calib, rng)
    }

    #[test]
    fn noise_off_reaches_solution() {
        let (problem, net, calib, mut rng) = setup(10, 1);
        let opts = GtOptions {
            noise: NoiseMode::Off,
            rounds: 20_000,
            ..GtOptions::default()
        };
        let out = dp_gt_solve(&problem, &net, &calib, &opts, &mut rng).unwrap();
        let x_star = problem.exact_solution().unwrap();
        for x in &out.agent_estimates {
            assert!(dist_sq(x, &x_star).sqrt() <= 1e-8);
        }
    }

    #[test]
    fn noisy_run_reaches_perturbed_fixed_point() {
        let (problem, net, calib, mut rng) = setup(10, 2);
        let opts = GtOptions {
            rounds: 20_000,
            record_trajectory: true,
            ..GtOptions::default()
        };
        let out = dp_gt_solve(&problem, &net, &calib, &opts, &mut rng).unwrap();
        let fixed = out.noisy_solution().unwrap();
        for x in &out.agent_estimates {
            assert!(dist_sq(x, &fixed).sqrt() <= 1e-8);
        }
        assert!(out.perturbed_pd);
        assert_eq!(out.trajectory.as_ref().unwrap().len(), out.iterations + 1);
    }

    #[test]
    fn large_step_is_detected() {
        let (problem, net, calib, mut rng) = setup(10, 3);
        let opts = GtOptions {
            beta: 5.0,
            ..GtOptions::default()
        };
        let r = dp_gt_solve(&problem, &net, &calib, &opts, &mut rng);
        assert!(matches!(r, Err(SolverError::Diverged { .. })), "{r:?}");
        let bad = GtOptions {
            beta: -1.0,
            ..GtOptions::default()
        };
        assert_eq!(dp_gt_solve(&problem, &net, &calib, &bad, &mut rng).unwrap_err(), SolverError::Step(-1.0));
    }

    #[test]
    fn stable_on_fifty_agents() {
        let (problem, net, calib, mut rng) = setup(50, 4);
        let opts = GtOptions {
            rounds: 20_000,
            ..GtOptions::default()
        };
        let out = dp_gt_solve(&problem, &net, &calib, &opts, &mut rng).unwrap();
        assert!(out.early_stopped);
        let fixed = out.noisy_solution().unwrap();
        assert!(dist_sq(&out.x_hat, &fixed) < 1e-6 * dist_sq(&fixed, &vec![0.0; 3]).max(1.0));
    }
}
