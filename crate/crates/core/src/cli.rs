// SPDX-License-Identifier: Apache-2.0

//! Command-line interface.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::dishuf::key_bits_for;
use crate::harness::acceptance::{run_suite, SuiteOptions};
use crate::harness::config::{ExperimentConfig, SolverKind};
use crate::harness::csv::{write_trajectory, write_trials};
use crate::harness::experiments::{self, summary_table, DEFAULT_EPS_LIST, DEFAULT_N_LIST};
use crate::harness::monte_carlo::{run_prepared, Prepared, TrialRow};
use crate::harness::seeds::trial_rng;
use crate::harness::{write_file, HarnessError};
use crate::mechanisms::calibrate_dishuf;
use crate::paillier::{selftest, MIN_KEY_BITS};

#[derive(Debug, Parser)]
#[command(name = "dpls", version, about = "Differentially private distributed least squares: experiments and checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one experiment and write its trial CSV.
    Run(RunArgs),
    /// Shuffled-consensus error over a list of privacy levels.
    SweepEps(SweepEpsArgs),
    /// All three solvers over a list of network sizes.
    SweepN(SweepNArgs),
    /// Per-round mean-square error of gradient tracking.
    Trajectory(TrajectoryArgs),
    /// Print every derived noise constant as key=value lines.
    Calibrate(CalibrateArgs),
    /// Run the acceptance suite.
    Verify(VerifyArgs),
    /// Paillier homomorphism and round-trip checks.
    PaillierSelftest(SelftestArgs),
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    /// key = value configuration file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    solver: Option<SolverKind>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    /// cycle:<weight> or file:<path>.
    #[arg(long)]
    graph: Option<String>,
    /// Problem fixture used by every trial.
    #[arg(long)]
    problem: Option<PathBuf>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gt_rounds: Option<usize>,
    /// Number of rounds or `auto`.
    #[arg(long)]
    consensus_rounds: Option<String>,
    #[arg(long)]
    consensus_tolerance: Option<f64>,
    #[arg(long)]
    a_bar: Option<u64>,
    #[arg(long)]
    g: Option<f64>,
    /// Truncation margin d, used when --gamma-bar is `none`.
    #[arg(long)]
    margin: Option<f64>,
    /// Truncation level or `none`.
    #[arg(long)]
    gamma_bar: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Skip feasibility checks on the calibration and the problem fixture.
    #[arg(long)]
    no_validate: bool,
    /// Disable all privacy noise.
    #[arg(long)]
    noise_off: bool,
    /// Paillier modulus bits or `auto`.
    #[arg(long)]
    key_bits: Option<String>,
    #[arg(long)]
    frac_bits: Option<u32>,
    /// Worker threads for concurrent trials.
    #[arg(long, env = "DPLS_JOBS")]
    jobs: Option<usize>,
}

impl ExperimentArgs {
    fn config(&self, base: ExperimentConfig) -> Result<ExperimentConfig, HarnessError> {
        let mut cfg = base;
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        let mut set = |key: &str, value: Option<String>| match value {
            Some(v) => cfg.set(key, &v),
            None => Ok(()),
        };
        let s = |v: Option<&dyn ToString>| v.map(|x| x.to_string());
        set("solver", s(self.solver.as_ref().map(|v| v as &dyn ToString)))?;
        set("n", s(self.n.as_ref().map(|v| v as &dyn ToString)))?;
        set("m", s(self.m.as_ref().map(|v| v as &dyn ToString)))?;
        set("graph", self.graph.clone())?;
        set("problem", self.problem.as_ref().map(|p| p.display().to_string()))?;
        set("eps", s(self.eps.as_ref().map(|v| v as &dyn ToString)))?;
        set("delta", s(self.delta.as_ref().map(|v| v as &dyn ToString)))?;
        set("mu", s(self.mu.as_ref().map(|v| v as &dyn ToString)))?;
        set("beta", s(self.beta.as_ref().map(|v| v as &dyn ToString)))?;
        set("gt_rounds", s(self.gt_rounds.as_ref().map(|v| v as &dyn ToString)))?;
        set("consensus_rounds", self.consensus_rounds.clone())?;
        set("consensus_tolerance", s(self.consensus_tolerance.as_ref().map(|v| v as &dyn ToString)))?;
        set("a_bar", s(self.a_bar.as_ref().map(|v| v as &dyn ToString)))?;
        set("g", s(self.g.as_ref().map(|v| v as &dyn ToString)))?;
        set("margin", s(self.margin.as_ref().map(|v| v as &dyn ToString)))?;
        set("gamma_bar", self.gamma_bar.clone())?;
        set("trials", s(self.trials.as_ref().map(|v| v as &dyn ToString)))?;
        set("seed", s(self.seed.as_ref().map(|v| v as &dyn ToString)))?;
        set("key_bits", self.key_bits.clone())?;
        set("frac_bits", s(self.frac_bits.as_ref().map(|v| v as &dyn ToString)))?;
        if self.no_validate {
            cfg.validate = false;
        }
        if self.noise_off {
            cfg.noise_off = true;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    /// Trial CSV output path.
    #[arg(long)]
    out: PathBuf,
    /// Write the first trial's shuffle transcript and audit verdict here.
    #[arg(long)]
    transcript: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepEpsArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    /// Comma-separated privacy levels.
    #[arg(long, value_delimiter = ',')]
    eps_list: Option<Vec<f64>>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SweepNArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    /// Comma-separated network sizes.
    #[arg(long, value_delimiter = ',')]
    n_list: Option<Vec<usize>>,
    /// Comma-separated solvers.
    #[arg(long, value_delimiter = ',')]
    solvers: Option<Vec<SolverKind>>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrajectoryArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    /// Trajectory CSV output path.
    #[arg(long)]
    out: PathBuf,
    /// Also write the per-trial CSV here.
    #[arg(long)]
    trials_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    /// Smallest eigenvalue of sum A_i; defaults to the first trial's instance.
    #[arg(long)]
    lambda_min: Option<f64>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = SuiteOptions::default().seed)]
    seed: u64,
    /// Only criteria whose name contains this text.
    #[arg(long)]
    only: Option<String>,
    #[arg(long, env = "DPLS_JOBS")]
    jobs: Option<usize>,
}

#[derive(Debug, Args)]
struct SelftestArgs {
    #[arg(long, default_value_t = MIN_KEY_BITS)]
    key_bits: u64,
    #[arg(long, default_value_t = 1000)]
    round_trips: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

/// Exit codes: 0 success, 1 failed check or rejected run, 2 usage error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn report_failures(rows: &[TrialRow]) {
    for r in rows.iter().filter(|r| r.failed) {
        eprintln!(
            "warning: {} trial {} (n = {}) failed: {}",
            r.solver,
            r.trial,
            r.n,
            r.message.as_deref().unwrap_or("unknown")
        );
    }
}

fn finish_rows(rows: &[TrialRow], out: &std::path::Path) -> Result<i32, HarnessError> {
    write_file(out, &write_trials(rows))?;
    report_failures(rows);
    print!("{}", summary_table(rows));
    println!("wrote {} rows to {}", rows.len(), out.display());
    Ok(0)
}

fn dispatch(command: Command) -> Result<i32, HarnessError> {
    match command {
        Command::Run(a) => {
            let cfg = a.experiment.config(ExperimentConfig::default())?;
            let prepared = Prepared::new(&cfg)?;
            let rows = run_prepared(&prepared, a.experiment.jobs, false, a.transcript.is_some())?;
            if let Some(path) = &a.transcript {
                match rows.first().and_then(|r| r.transcript.as_ref()) {
                    Some(t) => write_file(path, t)?,
                    None => eprintln!("warning: no transcript recorded (only dishuf-ac trials record one)"),
                }
            }
            finish_rows(&rows, &a.out)
        }
        Command::SweepEps(a) => {
            let cfg = a.experiment.config(ExperimentConfig::default())?;
            let eps = a.eps_list.unwrap_or_else(|| DEFAULT_EPS_LIST.to_vec());
            let rows = experiments::sweep_eps(&cfg, &eps, a.experiment.jobs)?;
            finish_rows(&rows, &a.out)
        }
        Command::SweepN(a) => {
            let base = ExperimentConfig {
                gt_rounds: 20_000,
                ..ExperimentConfig::default()
            };
            let cfg = a.experiment.config(base)?;
            let ns = a.n_list.unwrap_or_else(|| DEFAULT_N_LIST.to_vec());
            let solvers = a.solvers.unwrap_or_else(|| SolverKind::ALL.to_vec());
            let rows = experiments::sweep_n(&cfg, &ns, &solvers, a.experiment.jobs)?;
            finish_rows(&rows, &a.out)
        }
        Command::Trajectory(a) => {
            let base = ExperimentConfig {
                solver: SolverKind::Gt,
                trials: 1,
                ..ExperimentConfig::default()
            };
            let cfg = a.experiment.config(base)?;
            let (mean, rows) = experiments::trajectory(&cfg, a.experiment.jobs)?;
            report_failures(&rows);
            write_file(&a.out, &write_trajectory(&mean))?;
            if let Some(path) = &a.trials_out {
                write_file(path, &write_trials(&rows))?;
            }
            if let (Some(first), Some(last)) = (mean.first(), mean.last()) {
                println!("rounds {}: mean-square error {first:e} -> {last:e}", mean.len() - 1);
            }
            println!("wrote {}", a.out.display());
            Ok(0)
        }
        Command::Calibrate(a) => {
            let cfg = a.experiment.config(ExperimentConfig::default())?;
            print!("{}", calibration_table(&cfg, a.lambda_min)?);
            Ok(0)
        }
        Command::Verify(a) => {
            let opts = SuiteOptions {
                seed: a.seed,
                jobs: a.jobs,
            };
            let results = run_suite(&opts, a.only.as_deref(), |o| {
                println!("{o}");
                let _ = std::io::stdout().flush();
            });
            let failed = results.iter().filter(|r| !r.passed).count();
            println!("{} passed, {failed} failed", results.len() - failed);
            Ok(i32::from(failed > 0 || results.is_empty()))
        }
        Command::PaillierSelftest(a) => {
            let mut rng = trial_rng(a.seed, 0);
            let report = selftest(a.key_bits, a.round_trips, &mut rng)?;
            println!("pairs_checked={}", report.pairs_checked);
            println!("round_trips={}", report.round_trips);
            println!("failures={}", report.failures.len());
            for f in &report.failures {
                eprintln!("failure: {f}");
            }
            Ok(i32::from(!report.failures.is_empty()))
        }
    }
}

fn calibration_table(cfg: &ExperimentConfig, lambda_min: Option<f64>) -> Result<String, HarnessError> {
    let budget = cfg.budget()?;
    let mut shape = match cfg.fixture()? {
        Some(p) => p.shape(),
        None => cfg.generator().generate(cfg.n, &mut trial_rng(cfg.seed.unwrap_or(0), 0)).shape(),
    };
    if let Some(l) = lambda_min {
        shape.lambda_min = l;
    }
    let mut out = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(out, "{k}={v}");
    };
    kv("eps", budget.epsilon().to_string());
    kv("delta", budget.delta().to_string());
    kv("mu", budget.mu().to_string());
    kv("n", cfg.n.to_string());
    kv("m", cfg.m.to_string());
    kv("lambda_min", shape.lambda_min.to_string());
    kv("kappa_bar", crate::mechanisms::kappa_inv(budget.epsilon(), budget.delta())?.to_string());
    kv("gaussian_sigma", budget.gaussian_sigma().to_string());
    match crate::mechanisms::calibrate_gt_with(budget, shape, cfg.truncation(), false) {
        Ok(gt) => {
            kv("gt_gamma_bar", gt.gamma_bar.to_string());
            kv("gt_d", gt.d.to_string());
            kv("gt_c", gt.c.to_string());
            kv("gt_delta_floor", gt.delta_floor.to_string());
            kv("gt_sigma_gamma_sq", gt.sigma_gamma_sq.to_string());
            kv("gt_sigma_eta", gt.sigma_eta.to_string());
            let feasible = gt.check();
            kv("gt_feasible", feasible.is_ok().to_string());
            if let Err(e) = feasible {
                kv("gt_infeasible_reason", e.to_string());
            }
        }
        Err(e) => kv("gt_error", e.to_string()),
    }
    let ds = calibrate_dishuf(budget, cfg.n, cfg.a_bar, cfg.g)?;
    kv("a_bar", ds.a_bar.to_string());
    kv("g", ds.g.to_string());
    kv("dishuf_sigma_gamma", ds.sigma_gamma.to_string());
    kv("dishuf_alpha", ds.alpha.to_string());
    kv("dishuf_ln_one_minus_alpha", ds.ln_one_minus_alpha().to_string());
    kv("dishuf_ln_sigma_eta", ds.ln_sigma_eta().to_string());
    kv("dishuf_sigma_eta", ds.sigma_eta().to_string());
    kv("dishuf_zeta", ds.zeta().to_string());
    kv("dishuf_zeta_denominator", ds.zeta_denominator().to_string());
    kv(
        "dishuf_key_bits",
        key_bits_for(ds.ln_sigma_eta(), 0.0, ds.a_bar, cfg.frac_bits, 40.0).max(MIN_KEY_BITS).to_string(),
    );
    Ok(out)
}
