// SPDX-License-Identifier: Apache-2.0

//! The acceptance suite: one check per headline property, each reporting
//! PASS or FAIL with the measured numbers. Shared by `dpls verify` and the
//! `acceptance` test target.

use std::fmt;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::config::{ExperimentConfig, SolverKind};
use super::csv::write_trials;
use super::experiments::sweep_n;
use super::monte_carlo::{monte_carlo, with_jobs};
use super::seeds::{trial_rng, trial_seed};
use super::stats::Summary;
use crate::dishuf::{key_bits_for, plaintext_dishuf_oracle, run_dishuf, DiShufParams};
use crate::graph::build_cycle;
use crate::mechanisms::{
    calibrate_dishuf, calibrate_gt, calibrate_gt_with, dp_verify_numeric, kappa, kappa_inv, trunc_laplace_variance,
    PrivacyBudget, ScalarMechanism, Truncation,
};
use crate::paillier::{selftest, DEFAULT_FRAC_BITS, MIN_KEY_BITS};
use crate::problem::{devectorize, packed_len, vectorize, GlobalProblem, InstanceGenerator, ProblemShape};
use crate::scalar::dist_sq;
use crate::solvers::{
    dp_ac_baseline_solve, dp_dishuf_ac_solve, dp_gt_solve, sample_gt_noise, theorem1_bound, AcOptions, GtOptions,
    NoiseMode,
};
use crate::linalg::DenseMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SuiteOptions {
    pub seed: u64,
    pub jobs: Option<usize>,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self { seed: 2024, jobs: None }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CriterionOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for CriterionOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {} ({:.1}s): {}", self.name, self.seconds, self.detail)
    }
}

type Check = fn(&SuiteOptions) -> Result<String, String>;

pub const CRITERIA: [(&str, Check); 11] = [
    ("vectorization", vectorization),
    ("kappa-calibration", kappa_calibration),
    ("truncated-laplace", truncated_laplace),
    ("paillier", paillier),
    ("dishuf-zero-sum", dishuf_zero_sum),
    ("noise-off-equivalence", noise_off_equivalence),
    ("gt-convergence", gt_convergence),
    ("gt-error-bound", gt_error_bound),
    ("dishuf-ac-accuracy", dishuf_ac_accuracy),
    ("network-size-ordering", network_size_ordering),
    ("determinism", determinism),
];

pub fn criterion_names() -> Vec<&'static str> {
    CRITERIA.iter().map(|(n, _)| *n).collect()
}

/// Runs one named criterion; panics inside a check count as failures.
pub fn run_criterion(name: &str, opts: &SuiteOptions) -> Option<CriterionOutcome> {
    let (index, (name, check)) = CRITERIA.iter().enumerate().find(|(_, (n, _))| *n == name)?;
    let local = SuiteOptions {
        seed: trial_seed(opts.seed, index as u64),
        ..*opts
    };
    let start = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(|| check(&local)))
        .unwrap_or_else(|p| Err(format!("panicked: {}", panic_text(&p))));
    let seconds = start.elapsed().as_secs_f64();
    let (passed, detail) = match result {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    Some(CriterionOutcome {
        name,
        passed,
        detail,
        seconds,
    })
}

fn panic_text(p: &Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<String>()
        .cloned()
        .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "unknown payload".into())
}

/// Runs every criterion (or those whose name contains `filter`), calling
/// `report` after each.
pub fn run_suite(opts: &SuiteOptions, filter: Option<&str>, mut report: impl FnMut(&CriterionOutcome)) -> Vec<CriterionOutcome> {
    criterion_names()
        .into_iter()
        .filter(|n| filter.is_none_or(|f| n.contains(f)))
        .filter_map(|n| {
            let out = run_criterion(n, opts)?;
            report(&out);
            Some(out)
        })
        .collect()
}

fn require(ok: bool, detail: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(detail())
    }
}

fn within_time(start: Instant, limit: Duration, what: &str) -> Result<(), String> {
    let t = start.elapsed();
    require(t <= limit, || format!("{what} took {:.1}s, limit {:.0}s", t.as_secs_f64(), limit.as_secs_f64()))
}

fn err<E: fmt::Display>(e: E) -> String {
    e.to_string()
}

fn section5_budget() -> PrivacyBudget {
    PrivacyBudget::new(10.0, 0.2, 3.0).expect("valid budget")
}

fn section5_instance(n: usize, seed: u64) -> GlobalProblem<f64> {
    InstanceGenerator::normalized(3, n, 40.0, 1.0, 100.0).generate(n, &mut trial_rng(seed, 0))
}

fn vectorization(opts: &SuiteOptions) -> Result<String, String> {
    let start = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(opts.seed);
    let mut checked = 0;
    for m in 1..=6 {
        for _ in 0..2000 {
            let mut a = DenseMatrix::zeros(m, m);
            for p in 0..m {
                for q in p..m {
                    let v: f64 = rng.random_range(-1.0..1.0) * 10f64.powi(rng.random_range(-30..30));
                    a[(p, q)] = v;
                    a[(q, p)] = v;
                }
            }
            let packed = vectorize(&a).map_err(err)?;
            require(packed.len() == packed_len(m), || format!("m={m}: packed length {}", packed.len()))?;
            require(devectorize(&packed).map_err(err)? == a, || format!("m={m}: matrix round trip differs"))?;
            require(vectorize(&devectorize(&packed).map_err(err)?).map_err(err)? == packed, || {
                format!("m={m}: vector round trip differs")
            })?;
            checked += 1;
        }
    }
    within_time(start, Duration::from_secs(1), "round trips")?;
    Ok(format!("{checked} exact round trips for m = 1..6"))
}

fn kappa_calibration(_: &SuiteOptions) -> Result<String, String> {
    let eps_grid = [0.1, 0.5, 1.0, 5.0, 10.0];
    let delta_grid = [0.01, 0.05, 0.1, 0.2, 0.4];
    let mu = 3.0;
    let (mut worst_inv, mut worst_dp) = (0.0f64, 0.0f64);
    for &eps in &eps_grid {
        for &delta in &delta_grid {
            let s = kappa_inv(eps, delta).map_err(err)?;
            let back = kappa(eps, s).map_err(err)?;
            worst_inv = worst_inv.max((back - delta).abs());
            let budget = PrivacyBudget::new(eps, delta, mu).map_err(err)?;
            let sigma = mu / s;
            let measured = dp_verify_numeric(&ScalarMechanism::Gaussian { sigma }, &budget);
            worst_dp = worst_dp.max((measured - delta).abs());
        }
    }
    require(worst_inv <= 1e-10, || format!("inverse error {worst_inv:e} > 1e-10"))?;
    require(worst_dp <= 1e-6, || format!("numerical delta off by {worst_dp:e} > 1e-6"))?;
    Ok(format!("25 grid points: inverse error {worst_inv:.1e}, numerical delta error {worst_dp:.1e}"))
}

fn truncated_laplace(opts: &SuiteOptions) -> Result<String, String> {
    let start = Instant::now();
    let shape = ProblemShape {
        n: 10,
        m: 3,
        lambda_min: 50.0,
    };
    let budget = section5_budget();
    let calib = calibrate_gt(budget, shape, 0.8).map_err(err)?;
    let dist = calib.laplace();
    let bound = dist.bound();
    let mut rng = ChaCha20Rng::seed_from_u64(opts.seed);
    let count = 1_000_000;
    let mut samples: Vec<f64> = (0..count).map(|_| dist.sample(&mut rng)).collect();
    let violations = samples.iter().filter(|x| x.abs() > bound).count();
    require(violations == 0, || format!("{violations} samples outside the support"))?;
    let mean = samples.iter().sum::<f64>() / count as f64;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (count - 1) as f64;
    let want = trunc_laplace_variance(budget.mu(), budget.epsilon(), bound).map_err(err)?;
    let rel = (var / want - 1.0).abs();
    require(rel <= 0.02, || format!("variance {var} vs {want} ({:.2}% off)", 100.0 * rel))?;
    samples.sort_by(f64::total_cmp);
    let ks = samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = dist.cdf(x);
            (f - i as f64 / count as f64).abs().max((f - (i + 1) as f64 / count as f64).abs())
        })
        .fold(0.0, f64::max);
    require(ks <= 0.002, || format!("KS statistic {ks} > 0.002"))?;
    let measured = dp_verify_numeric(&ScalarMechanism::TruncatedLaplace(dist), &budget);
    require(measured <= budget.delta(), || format!("numerical delta {measured} > {}", budget.delta()))?;
    within_time(start, Duration::from_secs(30), "sampling and checks")?;
    Ok(format!(
        "gamma_bar {bound:.4}: 0 violations, variance {:.3}% off, KS {ks:.5}, numerical delta {measured:.4e} <= {}",
        100.0 * rel,
        budget.delta()
    ))
}

fn paillier(opts: &SuiteOptions) -> Result<String, String> {
    let start = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(opts.seed);
    let report = selftest(MIN_KEY_BITS, 1000, &mut rng).map_err(err)?;
    require(report.failures.is_empty(), || report.failures.join("; "))?;
    require(report.pairs_checked == 51 * 51 && report.round_trips >= 1000, || {
        format!("ran {} pairs and {} round trips", report.pairs_checked, report.round_trips)
    })?;
    within_time(start, Duration::from_secs(60), "self-test")?;
    Ok(format!(
        "{} homomorphic pairs and {} round trips exact",
        report.pairs_checked, report.round_trips
    ))
}

fn dishuf_zero_sum(opts: &SuiteOptions) -> Result<String, String> {
    let budget = section5_budget();
    let scale = BigRational::from_integer(BigInt::from(1u64) << DEFAULT_FRAC_BITS);
    let unit = BigRational::from_integer(BigInt::from(1)) / &scale;
    let mut worst_oracle = BigRational::zero();
    for run in 0..100u64 {
        let n = if run % 2 == 0 { 3 } else { 10 };
        let mut rng = trial_rng(opts.seed, run);
        let problem = InstanceGenerator::normalized(3, n, 40.0, 1.0, 100.0).generate(n, &mut rng);
        let thetas: Vec<Vec<f64>> = problem.thetas().into_iter().map(|t| t.into_vec()).collect();
        let net = build_cycle(n, 0.3).map_err(err)?;
        let calib = calibrate_dishuf(budget, n, 100, 0.01).map_err(err)?;
        let bound = thetas.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
        let params = DiShufParams {
            a_bar: 100,
            key_bits: key_bits_for(calib.ln_sigma_eta(), bound, 100, DEFAULT_FRAC_BITS, 40.0).max(MIN_KEY_BITS),
            frac_bits: DEFAULT_FRAC_BITS,
            record_transcript: false,
        };
        let out = run_dishuf(&net, &thetas, Some(calib.ln_sigma_eta()), &params, &mut rng).map_err(err)?;
        require(out.sum_scaled().iter().all(Zero::is_zero), || format!("run {run}: integer sum is not zero"))?;
        let decoded: Vec<Vec<BigRational>> = (0..n).map(|i| out.delta_exact(i)).collect();
        let limit = BigRational::from_integer(BigInt::from(2 * n as u64)) / &scale;
        for k in 0..decoded[0].len() {
            let total: BigRational = decoded.iter().map(|d| d[k].clone()).sum();
            require(total.abs() <= limit, || format!("run {run}: decoded sum {total} exceeds 2n/S"))?;
        }
        let noisy: Vec<Vec<BigRational>> = (0..n).map(|i| out.noisy_exact(i)).collect();
        let oracle = plaintext_dishuf_oracle(&net, &noisy, out.scalars());
        for (got, want) in decoded.iter().zip(&oracle) {
            for (g, w) in got.iter().zip(want) {
                let d = (g - w).abs();
                if d > worst_oracle {
                    worst_oracle = d;
                }
            }
        }
        require(worst_oracle <= unit, || format!("run {run}: oracle mismatch {worst_oracle}"))?;
    }
    Ok(format!(
        "100 runs (n = 3 and 10): integer sums exactly zero, oracle mismatch {}",
        worst_oracle
    ))
}

fn noise_off_equivalence(opts: &SuiteOptions) -> Result<String, String> {
    let n = 10;
    let net = build_cycle(n, 0.3).map_err(err)?;
    let budget = section5_budget();
    let dishuf = calibrate_dishuf(budget, n, 100, 0.01).map_err(err)?;
    let gt_opts = GtOptions {
        noise: NoiseMode::Off,
        rounds: 20_000,
        ..GtOptions::default()
    };
    let ac_opts = AcOptions {
        noise: NoiseMode::Off,
        ..AcOptions::default()
    };
    let mut worst = [0.0f64; 3];
    for trial in 0..20u64 {
        let mut rng = trial_rng(opts.seed, trial);
        let problem = InstanceGenerator::normalized(3, n, 40.0, 1.0, 100.0).generate(n, &mut rng);
        let x_star = problem.exact_solution().map_err(err)?;
        let gt_calib = calibrate_gt_with(budget, problem.shape(), Truncation::Level(3.1), false).map_err(err)?;
        let outs = [
            dp_gt_solve(&problem, &net, &gt_calib, &gt_opts, &mut rng).map_err(err)?,
            dp_dishuf_ac_solve(&problem, &net, &dishuf, &ac_opts, &mut rng).map_err(err)?,
            dp_ac_baseline_solve(&problem, &net, budget.gaussian_sigma(), &ac_opts, &mut rng).map_err(err)?,
        ];
        for (w, out) in worst.iter_mut().zip(&outs) {
            let e = out
                .agent_estimates
                .iter()
                .chain(std::iter::once(&out.x_hat))
                .map(|x| dist_sq(x, &x_star).sqrt())
                .fold(0.0, f64::max);
            *w = w.max(e);
        }
    }
    let names = ["gt", "dishuf-ac", "ac-baseline"];
    for (name, w) in names.iter().zip(worst) {
        require(w <= 1e-8, || format!("{name}: worst error {w:e} > 1e-8"))?;
    }
    Ok(format!(
        "20 instances, worst ||x - x*||: gt {:.1e}, dishuf-ac {:.1e}, ac-baseline {:.1e}",
        worst[0], worst[1], worst[2]
    ))
}

/// Least-squares line through `(t, y_t)`: slope and R^2.
fn linear_fit(y: &[f64]) -> (f64, f64) {
    let k = y.len() as f64;
    let mean_t = (k - 1.0) / 2.0;
    let mean_y = y.iter().sum::<f64>() / k;
    let (mut sty, mut stt, mut syy) = (0.0, 0.0, 0.0);
    for (t, v) in y.iter().enumerate() {
        let dt = t as f64 - mean_t;
        let dy = v - mean_y;
        sty += dt * dy;
        stt += dt * dt;
        syy += dy * dy;
    }
    let slope = sty / stt;
    let r2 = if syy > 0.0 { sty * sty / (stt * syy) } else { 1.0 };
    (slope, r2)
}

fn gt_convergence(opts: &SuiteOptions) -> Result<String, String> {
    let n = 10;
    let net = build_cycle(n, 0.3).map_err(err)?;
    let gt_opts = GtOptions {
        record_trajectory: true,
        ..GtOptions::default()
    };
    let mut summary = Vec::new();
    for trial in 0..5u64 {
        let start = Instant::now();
        let mut rng = trial_rng(opts.seed, trial);
        let problem = InstanceGenerator::normalized(3, n, 40.0, 1.0, 100.0).generate(n, &mut rng);
        let x_star = problem.exact_solution().map_err(err)?;
        let calib = calibrate_gt_with(section5_budget(), problem.shape(), Truncation::Level(3.1), false).map_err(err)?;
        let out = dp_gt_solve(&problem, &net, &calib, &gt_opts, &mut rng).map_err(err)?;
        within_time(start, Duration::from_secs(10), "one trial")?;
        let to_fixed = out.fixed_point_trajectory.as_ref().ok_or("no fixed-point trajectory")?;
        let to_star = out.trajectory.as_ref().ok_or("no trajectory")?;
        let first = to_fixed[0];
        let best = to_fixed.iter().copied().fold(f64::INFINITY, f64::min);
        let orders = (first / best.max(f64::MIN_POSITIVE)).log10();
        require(orders >= 6.0, || format!("trial {trial}: decrease of only {orders:.2} orders"))?;
        let floor = dist_sq(&out.noisy_solution().map_err(err)?, &x_star);
        let last = *to_star.last().expect("non-empty");
        require((last - floor).abs() <= 1e-6 * floor, || {
            format!("trial {trial}: final error {last:e} is not the noise floor {floor:e}")
        })?;
        let cut = to_fixed.iter().position(|&e| e <= first * 1e-6).expect("reached above");
        let logs: Vec<f64> = to_fixed[..=cut].iter().map(|e| e.ln()).collect();
        let (slope, r2) = linear_fit(&logs);
        require(slope < 0.0 && r2 >= 0.95, || format!("trial {trial}: slope {slope:e}, R^2 {r2:.4}"))?;
        summary.push(format!("{orders:.1} orders, R^2 {r2:.3}"));
    }
    Ok(format!("5 trials at the reference parameters: {}", summary.join("; ")))
}

fn gt_error_bound(opts: &SuiteOptions) -> Result<String, String> {
    let start = Instant::now();
    let n = 10;
    let m = 3;
    let net = build_cycle(n, 0.3).map_err(err)?;
    let problem = section5_instance(n, opts.seed);
    let x_star = problem.exact_solution().map_err(err)?;
    let calib = calibrate_gt_with(section5_budget(), problem.shape(), Truncation::Level(3.1), false).map_err(err)?;
    let bound = theorem1_bound(&problem, &calib).map_err(err)?;
    let gt_opts = GtOptions {
        rounds: 20_000,
        ..GtOptions::default()
    };
    let errors = with_jobs(opts.jobs, || {
        use rayon::prelude::*;
        (0..200u64)
            .into_par_iter()
            .map(|t| {
                let mut rng = trial_rng(opts.seed ^ 0x5EED, t);
                dp_gt_solve(&problem, &net, &calib, &gt_opts, &mut rng).map(|o| o.error_sq(&x_star))
            })
            .collect::<Result<Vec<f64>, _>>()
    })
    .map_err(err)?
    .map_err(err)?;
    let mean = errors.iter().sum::<f64>() / errors.len() as f64;
    require(mean <= bound, || format!("mean error {mean:e} exceeds bound {bound:e}"))?;

    let mut rng = ChaCha20Rng::seed_from_u64(opts.seed ^ 0xA11);
    let trials = 10_000;
    let (mut sum_a, mut sum_b, mut worst_norm) = (0.0, 0.0, 0.0f64);
    for _ in 0..trials {
        let noise = sample_gt_noise(n, m, &calib, &mut rng);
        let fa = noise.omega_a().frobenius_sq();
        worst_norm = worst_norm.max(fa.sqrt());
        sum_a += fa;
        sum_b += noise.omega_b().iter().map(|v| v * v).sum::<f64>();
    }
    let want_a = (n * m * m) as f64 * calib.sigma_gamma_sq;
    let want_b = (n * m) as f64 * calib.sigma_eta * calib.sigma_eta;
    let (ea, eb) = (sum_a / trials as f64, sum_b / trials as f64);
    let (ra, rb) = ((ea / want_a - 1.0).abs(), (eb / want_b - 1.0).abs());
    require(ra <= 0.05, || format!("E||Omega_A||^2 = {ea} vs {want_a}"))?;
    require(rb <= 0.05, || format!("E||Omega_B||^2 = {eb} vs {want_b}"))?;
    let hard = (m * n) as f64 * calib.gamma_bar;
    require(worst_norm <= hard, || format!("||Omega_A|| reached {worst_norm} > {hard}"))?;
    within_time(start, Duration::from_secs(300), "bound check")?;
    Ok(format!(
        "mean error {mean:.4e} <= bound {bound:.4e} (d = {:.3}); Omega_A {:.2}% off, Omega_B {:.2}% off, max ||Omega_A|| {worst_norm:.2} <= {hard:.1}",
        calib.d,
        100.0 * ra,
        100.0 * rb
    ))
}

fn dishuf_ac_accuracy(opts: &SuiteOptions) -> Result<String, String> {
    let start = Instant::now();
    let cfg = ExperimentConfig {
        solver: SolverKind::DishufAc,
        trials: 1000,
        seed: Some(opts.seed),
        ..ExperimentConfig::default()
    };
    let rows = monte_carlo(&cfg, opts.jobs).map_err(err)?;
    let failed: Vec<&str> = rows.iter().filter_map(|r| r.message.as_deref()).collect();
    require(failed.is_empty(), || format!("{} failed trials, first: {}", failed.len(), failed[0]))?;
    let mean = rows.iter().map(|r| r.theta_error_sq.unwrap_or(f64::NAN)).sum::<f64>() / rows.len() as f64;
    let calib = calibrate_dishuf(section5_budget(), cfg.n, cfg.a_bar, cfg.g).map_err(err)?;
    let dim = packed_len(cfg.m) + cfg.m;
    let want = (dim * cfg.n) as f64 * calib.sigma_gamma * calib.sigma_gamma;
    let rel = (mean / want - 1.0).abs();
    require(rel <= 0.10, || format!("mean {mean} vs {want} ({:.1}% off)", 100.0 * rel))?;
    within_time(start, Duration::from_secs(300), "1000 trials")?;
    let dimensionless = (1.0 + cfg.g).powi(2) * cfg.mu * cfg.mu / (calib.kappa_bar * calib.kappa_bar);
    Ok(format!(
        "E||theta_hat - sum theta||^2 = {mean:.4} vs dim n sigma^2 = {want:.4} ({:.2}% off); without the dimension factor it would be {dimensionless:.4}",
        100.0 * rel
    ))
}

fn network_size_ordering(opts: &SuiteOptions) -> Result<String, String> {
    let cfg = ExperimentConfig {
        trials: 100,
        seed: Some(opts.seed),
        validate: false,
        gamma_bar: Some(3.1),
        gt_rounds: 20_000,
        ..ExperimentConfig::default()
    };
    let rows = sweep_n(&cfg, &[10, 50], &SolverKind::ALL, opts.jobs).map_err(err)?;
    let median = |solver: SolverKind, n: usize| -> Result<f64, String> {
        let group: Vec<_> = rows.iter().filter(|r| r.solver == solver && r.n == n).collect();
        let failed = group.iter().filter(|r| r.failed).count();
        require(failed == 0, || format!("{solver} n={n}: {failed} failed trials"))?;
        let vals: Vec<f64> = group.iter().map(|r| r.mean_agent_error_sq).collect();
        Summary::of(&vals).map(|s| s.median).ok_or_else(|| format!("{solver} n={n}: no data"))
    };
    let gt = (median(SolverKind::Gt, 10)?, median(SolverKind::Gt, 50)?);
    let ds = (median(SolverKind::DishufAc, 10)?, median(SolverKind::DishufAc, 50)?);
    let ac = (median(SolverKind::AcBaseline, 10)?, median(SolverKind::AcBaseline, 50)?);
    let table = format!(
        "medians n=10/50: gt {:.3e}/{:.3e}, dishuf-ac {:.3e}/{:.3e}, ac-baseline {:.3e}/{:.3e}",
        gt.0, gt.1, ds.0, ds.1, ac.0, ac.1
    );
    require(gt.1 > gt.0, || format!("gt error does not grow with n; {table}"))?;
    let ratio = ds.1 / ds.0;
    require((1.0 / 3.0..=3.0).contains(&ratio), || format!("dishuf-ac ratio {ratio:.2} outside 3x; {table}"))?;
    require(ds.0 <= ac.0 && ds.1 <= ac.1, || format!("dishuf-ac above baseline; {table}"))?;
    Ok(table)
}

fn determinism(opts: &SuiteOptions) -> Result<String, String> {
    let cfg = ExperimentConfig {
        trials: 2,
        seed: Some(7),
        ..ExperimentConfig::default()
    };
    let a = write_trials(&monte_carlo(&cfg, Some(1)).map_err(err)?);
    let b = write_trials(&monte_carlo(&cfg, opts.jobs.or(Some(2))).map_err(err)?);
    require(a == b, || "CSV bytes differ between runs".into())?;
    Ok(format!("two runs with seed 7 produced identical {} byte CSVs", a.len()))
}
