// SPDX-License-Identifier: Apache-2.0

//! Experiment configuration: defaults, a flat `key = value` file format and
//! overrides applied through the same setter.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::HarnessError;
use crate::graph::{build_cycle, read_network, Network};
use crate::mechanisms::{PrivacyBudget, Truncation};
use crate::problem::{read_problem_with, GlobalProblem, InstanceGenerator};
use crate::solvers::{AcOptions, GtOptions, Horizon, NoiseMode};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SolverKind {
    Gt,
    DishufAc,
    AcBaseline,
}

impl SolverKind {
    pub const ALL: [SolverKind; 3] = [SolverKind::Gt, SolverKind::DishufAc, SolverKind::AcBaseline];

    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Gt => "gt",
            SolverKind::DishufAc => "dishuf-ac",
            SolverKind::AcBaseline => "ac-baseline",
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SolverKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        SolverKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| "expected gt, dishuf-ac or ac-baseline".to_string())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum GraphSpec {
    Cycle { weight: f64 },
    File(PathBuf),
}

impl fmt::Display for GraphSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphSpec::Cycle { weight } => write!(f, "cycle:{weight}"),
            GraphSpec::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

impl FromStr for GraphSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if let Some(w) = s.strip_prefix("cycle:") {
            let weight = w.parse::<f64>().map_err(|e| e.to_string())?;
            Ok(GraphSpec::Cycle { weight })
        } else if let Some(p) = s.strip_prefix("file:") {
            Ok(GraphSpec::File(PathBuf::from(p)))
        } else {
            Err("expected cycle:<weight> or file:<path>".into())
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub solver: SolverKind,
    pub n: usize,
    pub m: usize,
    pub graph: GraphSpec,
    /// Fixed problem used by every trial instead of random instances.
    pub problem: Option<PathBuf>,
    pub eps: f64,
    pub delta: f64,
    pub mu: f64,
    pub beta: f64,
    pub gt_rounds: usize,
    /// `None` sizes the consensus horizon from the spectral rate.
    pub consensus_rounds: Option<usize>,
    pub consensus_tolerance: f64,
    pub a_bar: u64,
    pub g: f64,
    /// Truncation margin `d`, used when `gamma_bar` is unset.
    pub margin: f64,
    pub gamma_bar: Option<f64>,
    pub trials: usize,
    pub seed: Option<u64>,
    pub validate: bool,
    pub noise_off: bool,
    /// `None` sizes the Paillier modulus from the noise scale.
    pub key_bits: Option<u64>,
    pub frac_bits: u32,
    /// Random instances: `sum A_i` carries this scale, `sum B_i` this spread.
    pub total_scale: f64,
    pub diag_shift: f64,
    pub b_total: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            solver: SolverKind::DishufAc,
            n: 10,
            m: 3,
            graph: GraphSpec::Cycle { weight: 0.3 },
            problem: None,
            eps: 10.0,
            delta: 0.2,
            mu: 3.0,
            beta: 0.005,
            gt_rounds: 2000,
            consensus_rounds: None,
            consensus_tolerance: 1e-10,
            a_bar: 100,
            g: 0.01,
            margin: 0.8,
            gamma_bar: Some(3.1),
            trials: 100,
            seed: None,
            validate: true,
            noise_off: false,
            key_bits: None,
            frac_bits: crate::paillier::DEFAULT_FRAC_BITS,
            total_scale: 40.0,
            diag_shift: 1.0,
            b_total: 100.0,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, HarnessError>
where
    T::Err: fmt::Display,
{
    value.parse::<T>().map_err(|e| HarnessError::InvalidValue {
        key: key.into(),
        value: value.into(),
        message: e.to_string(),
    })
}

fn parse_auto<T: FromStr>(key: &str, value: &str, word: &str) -> Result<Option<T>, HarnessError>
where
    T::Err: fmt::Display,
{
    if value == word {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

impl ExperimentConfig {
    pub const KEYS: [&'static str; 26] = [
        "solver",
        "n",
        "m",
        "graph",
        "problem",
        "eps",
        "delta",
        "mu",
        "beta",
        "gt_rounds",
        "consensus_rounds",
        "consensus_tolerance",
        "a_bar",
        "g",
        "margin",
        "gamma_bar",
        "trials",
        "seed",
        "validate",
        "noise_off",
        "key_bits",
        "frac_bits",
        "total_scale",
        "diag_shift",
        "b_total",
        "jobs",
    ];

    /// Sets one key; dashes and underscores are interchangeable. `jobs` is
    /// accepted and ignored here (it is a runner setting).
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), HarnessError> {
        let key = key.trim().replace('-', "_");
        let value = value.trim();
        let k = key.as_str();
        match k {
            "solver" => self.solver = parse(k, value)?,
            "n" => self.n = parse(k, value)?,
            "m" => self.m = parse(k, value)?,
            "graph" => self.graph = parse(k, value)?,
            "problem" => self.problem = parse_auto(k, value, "none")?,
            "eps" => self.eps = parse(k, value)?,
            "delta" => self.delta = parse(k, value)?,
            "mu" => self.mu = parse(k, value)?,
            "beta" => self.beta = parse(k, value)?,
            "gt_rounds" => self.gt_rounds = parse(k, value)?,
            "consensus_rounds" => self.consensus_rounds = parse_auto(k, value, "auto")?,
            "consensus_tolerance" => self.consensus_tolerance = parse(k, value)?,
            "a_bar" => self.a_bar = parse(k, value)?,
            "g" => self.g = parse(k, value)?,
            "margin" => self.margin = parse(k, value)?,
            "gamma_bar" => self.gamma_bar = parse_auto(k, value, "none")?,
            "trials" => self.trials = parse(k, value)?,
            "seed" => self.seed = Some(parse(k, value)?),
            "validate" => self.validate = parse(k, value)?,
            "noise_off" => self.noise_off = parse(k, value)?,
            "key_bits" => self.key_bits = parse_auto(k, value, "auto")?,
            "frac_bits" => self.frac_bits = parse(k, value)?,
            "total_scale" => self.total_scale = parse(k, value)?,
            "diag_shift" => self.diag_shift = parse(k, value)?,
            "b_total" => self.b_total = parse(k, value)?,
            "jobs" => {
                parse::<usize>(k, value)?;
            }
            _ => return Err(HarnessError::UnknownKey(key)),
        }
        Ok(())
    }

    /// Applies a `key = value` file; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), HarnessError> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| HarnessError::ConfigSyntax {
                path: origin.into(),
                line: idx + 1,
                message: "expected `key = value`".into(),
            })?;
            self.set(key, value)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), HarnessError> {
        let text = super::read_file(path)?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// Canonical `key = value` rendering that [`apply_text`](Self::apply_text) reads back.
    pub fn to_text(&self) -> String {
        let opt = |v: Option<String>, none: &str| v.unwrap_or_else(|| none.to_string());
        [
            ("solver", self.solver.to_string()),
            ("n", self.n.to_string()),
            ("m", self.m.to_string()),
            ("graph", self.graph.to_string()),
            ("problem", opt(self.problem.as_ref().map(|p| p.display().to_string()), "none")),
            ("eps", self.eps.to_string()),
            ("delta", self.delta.to_string()),
            ("mu", self.mu.to_string()),
            ("beta", self.beta.to_string()),
            ("gt_rounds", self.gt_rounds.to_string()),
            ("consensus_rounds", opt(self.consensus_rounds.map(|v| v.to_string()), "auto")),
            ("consensus_tolerance", self.consensus_tolerance.to_string()),
            ("a_bar", self.a_bar.to_string()),
            ("g", self.g.to_string()),
            ("margin", self.margin.to_string()),
            ("gamma_bar", opt(self.gamma_bar.map(|v| v.to_string()), "none")),
            ("trials", self.trials.to_string()),
            ("seed", opt(self.seed.map(|v| v.to_string()), "")),
            ("validate", self.validate.to_string()),
            ("noise_off", self.noise_off.to_string()),
            ("key_bits", opt(self.key_bits.map(|v| v.to_string()), "auto")),
            ("frac_bits", self.frac_bits.to_string()),
            ("total_scale", self.total_scale.to_string()),
            ("diag_shift", self.diag_shift.to_string()),
            ("b_total", self.b_total.to_string()),
        ]
        .into_iter()
        .filter(|(_, v)| !v.is_empty())
        .map(|(k, v)| format!("{k} = {v}\n"))
        .collect()
    }

    pub fn seed(&self) -> Result<u64, HarnessError> {
        self.seed.ok_or(HarnessError::MissingSeed)
    }

    pub fn budget(&self) -> Result<PrivacyBudget, HarnessError> {
        Ok(PrivacyBudget::new(self.eps, self.delta, self.mu)?)
    }

    pub fn truncation(&self) -> Truncation {
        match self.gamma_bar {
            Some(level) => Truncation::Level(level),
            None => Truncation::Margin(self.margin),
        }
    }

    pub fn noise(&self) -> NoiseMode {
        if self.noise_off {
            NoiseMode::Off
        } else {
            NoiseMode::On
        }
    }

    pub fn network(&self) -> Result<Network, HarnessError> {
        let net = match &self.graph {
            GraphSpec::Cycle { weight } => build_cycle(self.n, *weight)?,
            GraphSpec::File(p) => read_network(&super::read_file(p)?)?,
        };
        if net.n() != self.n {
            return Err(HarnessError::InvalidValue {
                key: "graph".into(),
                value: self.graph.to_string(),
                message: format!("network has {} agents, n = {}", net.n(), self.n),
            });
        }
        Ok(net)
    }

    pub fn fixture(&self) -> Result<Option<GlobalProblem<f64>>, HarnessError> {
        let Some(path) = &self.problem else {
            return Ok(None);
        };
        let p = read_problem_with(&super::read_file(path)?, self.validate)?;
        if p.n() != self.n || p.dim() != self.m {
            return Err(HarnessError::FixtureShape {
                fixture_n: p.n(),
                fixture_m: p.dim(),
                n: self.n,
                m: self.m,
            });
        }
        Ok(Some(p))
    }

    pub fn generator(&self) -> InstanceGenerator {
        InstanceGenerator::normalized(self.m, self.n, self.total_scale, self.diag_shift, self.b_total)
    }

    pub fn gt_options(&self, record_trajectory: bool) -> GtOptions {
        GtOptions {
            beta: self.beta,
            rounds: self.gt_rounds,
            noise: self.noise(),
            record_trajectory,
            ..GtOptions::default()
        }
    }

    pub fn ac_options(&self, record_transcript: bool) -> AcOptions {
        AcOptions {
            horizon: self.consensus_rounds.map_or(Horizon::default(), Horizon::Fixed),
            tolerance: self.consensus_tolerance,
            noise: self.noise(),
            key_bits: self.key_bits,
            frac_bits: self.frac_bits,
            record_transcript,
            ..AcOptions::default()
        }
    }
}
