// SPDX-License-Identifier: Apache-2.0

//! Undirected weighted communication graphs and their Laplacian spectra.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;

use thiserror::Error;

use crate::linalg::{symmetric_eigenvalues, DenseMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("need at least 3 agents, got {0}")]
    TooSmall(usize),
    #[error("edge ({0}, {1}) references an agent outside 0..{2}")]
    OutOfRange(usize, usize, usize),
    #[error("self-loop at agent {0}")]
    SelfLoop(usize),
    #[error("edge ({0}, {1}) listed twice")]
    Duplicate(usize, usize),
    #[error("weight {w} on edge ({i}, {j}) is outside (0, 1)")]
    Weight { i: usize, j: usize, w: f64 },
    #[error("cycle weight {0} must lie in (0, 0.5)")]
    CycleWeight(f64),
    #[error("Laplacian diagonal at agent {agent} is {value}, must lie in (0, 1)")]
    Diagonal { agent: usize, value: f64 },
    #[error("graph is disconnected")]
    Disconnected,
    #[error("largest Laplacian eigenvalue {0} is not below 2")]
    Spectrum(f64),
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// A validated connected graph with weights `w_ij = w_ji` in `(0, 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    n: usize,
    /// Sorted `(i, j, w)` with `i < j`.
    edges: Vec<(usize, usize, f64)>,
    adjacency: Vec<Vec<(usize, f64)>>,
    eigenvalues: Vec<f64>,
}

impl Network {
    /// Validates an undirected edge list (either orientation accepted).
    pub fn new(n: usize, edge_list: &[(usize, usize, f64)]) -> Result<Self, GraphError> {
        if n < 3 {
            return Err(GraphError::TooSmall(n));
        }
        let mut map = BTreeMap::new();
        for &(a, b, w) in edge_list {
            if a >= n || b >= n {
                return Err(GraphError::OutOfRange(a, b, n));
            }
            if a == b {
                return Err(GraphError::SelfLoop(a));
            }
            if !(w > 0.0 && w < 1.0) {
                return Err(GraphError::Weight { i: a, j: b, w });
            }
            let key = (a.min(b), a.max(b));
            if map.insert(key, w).is_some() {
                return Err(GraphError::Duplicate(key.0, key.1));
            }
        }
        let edges: Vec<_> = map.into_iter().map(|((i, j), w)| (i, j, w)).collect();
        let mut adjacency = vec![Vec::new(); n];
        for &(i, j, w) in &edges {
            adjacency[i].push((j, w));
            adjacency[j].push((i, w));
        }
        for (agent, nb) in adjacency.iter().enumerate() {
            let value: f64 = nb.iter().map(|(_, w)| w).sum();
            if !(value > 0.0 && value < 1.0) {
                return Err(GraphError::Diagonal { agent, value });
            }
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(v) = queue.pop_front() {
            for &(u, _) in &adjacency[v] {
                if !seen[u] {
                    seen[u] = true;
                    queue.push_back(u);
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(GraphError::Disconnected);
        }
        let mut net = Self {
            n,
            edges,
            adjacency,
            eigenvalues: Vec::new(),
        };
        net.eigenvalues = symmetric_eigenvalues(&net.laplacian()).expect("square");
        let top = *net.eigenvalues.last().expect("n >= 3");
        if top >= 2.0 {
            return Err(GraphError::Spectrum(top));
        }
        Ok(net)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Sorted `(i, j, w)` with `i < j`.
    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn max_degree(&self) -> usize {
        (0..self.n).map(|i| self.degree(i)).max().unwrap_or(0)
    }

    pub fn laplacian(&self) -> DenseMatrix<f64> {
        let mut l = DenseMatrix::zeros(self.n, self.n);
        for &(i, j, w) in &self.edges {
            l[(i, j)] = -w;
            l[(j, i)] = -w;
            l[(i, i)] += w;
            l[(j, j)] += w;
        }
        l
    }

    /// Laplacian eigenvalues, ascending.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `max(|1 - lambda_2|, |1 - lambda_n|)`, the contraction factor of
    /// `y <- (I - L) y` on the disagreement subspace.
    pub fn consensus_rate(&self) -> f64 {
        let l2 = self.eigenvalues[1];
        let ln = self.eigenvalues[self.n - 1];
        (1.0 - l2).abs().max((1.0 - ln).abs())
    }

    /// Rounds needed to shrink disagreement by `factor`, from the spectral rate.
    pub fn rounds_to_contract(&self, factor: f64) -> usize {
        let rate = self.consensus_rate();
        (factor.ln() / rate.ln()).ceil().max(0.0) as usize
    }
}

/// Ring on `n` agents with uniform weight `w`.
pub fn build_cycle(n: usize, w: f64) -> Result<Network, GraphError> {
    if n < 3 {
        return Err(GraphError::TooSmall(n));
    }
    if !(w > 0.0 && w < 0.5) {
        return Err(GraphError::CycleWeight(w));
    }
    let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n, w)).collect();
    Network::new(n, &edges)
}

/// `n` on the first line, then `i j w` per edge with 0-based indices.
pub fn write_network(net: &Network) -> String {
    let mut out = format!("{}\n", net.n());
    for &(i, j, w) in net.edges() {
        let _ = writeln!(out, "{i} {j} {w:e}");
    }
    out
}

pub fn read_network(text: &str) -> Result<Network, GraphError> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
    let err = |line: usize, message: String| GraphError::Parse {
        line: line + 1,
        message,
    };
    let (hl, header) = lines.next().ok_or_else(|| err(0, "missing agent count".into()))?;
    let n: usize = header.trim().parse().map_err(|e| err(hl, format!("{e}")))?;
    let mut edges = Vec::new();
    for (ln, line) in lines {
        let tok: Vec<&str> = line.split_whitespace().collect();
        let [i, j, w] = tok[..] else {
            return Err(err(ln, "expected `i j w`".into()));
        };
        edges.push((
            i.parse().map_err(|e| err(ln, format!("{e}")))?,
            j.parse().map_err(|e| err(ln, format!("{e}")))?,
            w.parse().map_err(|e| err(ln, format!("{e}")))?,
        ));
    }
    Network::new(n, &edges)
}
