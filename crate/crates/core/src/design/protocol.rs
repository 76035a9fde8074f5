//! Distributed maximum-beacon protocol.
//!
//! Every node draws a private beacon, then for `n - 1` synchronous rounds
//! runs consensus on its state, max-consensus on the beacon and a BFS depth
//! label towards the beacon's owner. Afterwards each node designs its own
//! feedback row: the beacon owner (the new root) keeps itself and its
//! deepest neighbour, every other node keeps its shallowest neighbour.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::row::{heuristic_row_design, RowDesignProblem, RowDesignResult};
use super::{FeedbackMatrix, Method};
use crate::dynamics::Trajectory;
use crate::format::{fmt_f64, Num};
use crate::graph::Topology;
use crate::linalg::{DenseMatrix, Vector};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Executor {
    /// One node after another.
    #[default]
    Sequential,
    /// Nodes of a round in parallel on the rayon pool.
    Parallel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeState {
    pub x: f64,
    pub beacon: f64,
    pub depth: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogRecord {
    pub round: usize,
    pub node: usize,
    pub b: Num,
    pub d: usize,
    pub x: Num,
}

#[derive(Debug, Clone)]
pub struct ProtocolOutcome {
    pub k: DenseMatrix,
    pub root: usize,
    pub xi: Vec<f64>,
    /// Final-round node states.
    pub states: Vec<NodeState>,
    /// Parent chosen in the row design (`j_0` for the root, `j_p` otherwise).
    pub parents: Vec<usize>,
    pub rows: Vec<RowDesignResult>,
    pub log: Vec<LogRecord>,
    /// States during the `n - 1` protocol rounds, which run on `W`.
    pub trajectory: Trajectory,
}

#[derive(Debug, Clone)]
pub struct ProtocolConfig {
    pub tau: f64,
    pub delta: Option<f64>,
    pub seed: u64,
    pub executor: Executor,
}

impl ProtocolConfig {
    pub fn new(tau: f64, seed: u64) -> Self {
        ProtocolConfig { tau, delta: None, seed, executor: Executor::Sequential }
    }
}

/// Private beacon draws, uniform on `[0, 1)`.
pub fn draw_beacons(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random::<f64>()).collect()
}

fn step_node(t: &Topology, neighbors: &[usize], xi: f64, prev: &[NodeState], i: usize) -> NodeState {
    let w = t.weights();
    let mut x = 0.0;
    for (j, s) in prev.iter().enumerate() {
        x += w[(i, j)] * s.x;
    }
    let beacon = neighbors.iter().map(|&j| prev[j].beacon).fold(prev[i].beacon, f64::max);
    let depth = if beacon == xi {
        0
    } else {
        neighbors
            .iter()
            .filter(|&&j| prev[j].beacon == beacon)
            .map(|&j| prev[j].depth + 1)
            .min()
            .unwrap_or(prev[i].depth)
    };
    NodeState { x, beacon, depth }
}

fn log_round(log: &mut Vec<LogRecord>, round: usize, states: &[NodeState]) {
    for (node, s) in states.iter().enumerate() {
        log.push(LogRecord { round, node, b: Num(s.beacon), d: s.depth, x: Num(s.x) });
    }
}

/// Lowest-index neighbour with the extreme depth.
fn pick_parent(neighbors: &[usize], states: &[NodeState], deepest: bool) -> Option<usize> {
    let mut best: Option<usize> = None;
    for &j in neighbors {
        best = match best {
            None => Some(j),
            Some(b) => {
                let better = if deepest {
                    states[j].depth > states[b].depth
                } else {
                    states[j].depth < states[b].depth
                };
                Some(if better { j } else { b })
            }
        };
    }
    best
}

pub fn run_protocol(t: &Topology, x0: &Vector, cfg: &ProtocolConfig) -> Result<ProtocolOutcome> {
    let n = t.n();
    if x0.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "x0 has length {}, network has {n} nodes",
            x0.len()
        )));
    }
    if !(cfg.tau > 0.0) {
        return Err(Error::BudgetDegenerate(cfg.tau));
    }
    let xi = draw_beacons(n, cfg.seed);
    let neighbors: Vec<Vec<usize>> = (0..n).map(|i| t.neighbors(i)).collect();
    let mut states: Vec<NodeState> = (0..n)
        .map(|i| NodeState { x: x0[i], beacon: xi[i], depth: 0 })
        .collect();
    let mut log = Vec::with_capacity(n * n);
    log_round(&mut log, 0, &states);
    let mut xs = vec![x0.clone()];
    for round in 1..n {
        let prev = states;
        states = match cfg.executor {
            Executor::Sequential => (0..n)
                .map(|i| step_node(t, &neighbors[i], xi[i], &prev, i))
                .collect(),
            Executor::Parallel => (0..n)
                .into_par_iter()
                .map(|i| step_node(t, &neighbors[i], xi[i], &prev, i))
                .collect(),
        };
        log_round(&mut log, round, &states);
        xs.push(Vector::from_iterator(n, states.iter().map(|s| s.x)));
    }

    let roots: Vec<usize> = (0..n).filter(|&i| states[i].beacon == xi[i]).collect();
    if roots.len() != 1 {
        return Err(Error::NumericalFailure(format!(
            "expected one beacon owner after {} rounds, found {}",
            n - 1,
            roots.len()
        )));
    }
    let root = roots[0];

    let design_row = |i: usize| -> Result<(usize, RowDesignResult)> {
        let is_root = i == root;
        let parent = pick_parent(&neighbors[i], &states, is_root)
            .ok_or_else(|| Error::Config(format!("node {} has no in-neighbours", i + 1)))?;
        let mandatory = if is_root { vec![i, parent] } else { vec![parent] };
        let row: Vec<f64> = t.weights().row(i).iter().copied().collect();
        let problem = RowDesignProblem { weights: row, mandatory, tau: cfg.tau, delta: cfg.delta };
        Ok((parent, heuristic_row_design(&problem)?))
    };
    let designed: Vec<(usize, RowDesignResult)> = match cfg.executor {
        Executor::Sequential => (0..n).map(design_row).collect::<Result<_>>()?,
        Executor::Parallel => (0..n).into_par_iter().map(design_row).collect::<Result<_>>()?,
    };
    let mut k = DenseMatrix::zeros(n, n);
    let mut parents = Vec::with_capacity(n);
    let mut rows = Vec::with_capacity(n);
    for (i, (parent, r)) in designed.into_iter().enumerate() {
        for (j, v) in r.k_row.iter().enumerate() {
            k[(i, j)] = *v;
        }
        parents.push(parent);
        rows.push(r);
    }
    Ok(ProtocolOutcome {
        k,
        root,
        xi,
        states,
        parents,
        rows,
        log,
        trajectory: Trajectory { states: xs },
    })
}

impl ProtocolOutcome {
    pub fn log_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.log {
            out.push_str(&serde_json::to_string(r).expect("log record serialisation cannot fail"));
            out.push('\n');
        }
        out
    }

    pub fn depths(&self) -> Vec<usize> {
        self.states.iter().map(|s| s.depth).collect()
    }

    pub fn feedback(&self, t: &Topology) -> Result<FeedbackMatrix> {
        let mut fb = FeedbackMatrix::verified(t, self.k.clone(), Method::Distributed)?;
        fb.notes.push(format!("root node {}", self.root + 1));
        for (i, r) in self.rows.iter().enumerate() {
            for note in &r.notes {
                fb.notes.push(format!("row {}: {note}", i + 1));
            }
        }
        Ok(fb)
    }

    /// Largest row `l1` norm of `K`.
    pub fn max_row_budget(&self) -> f64 {
        self.rows.iter().map(|r| r.budget_used).fold(0.0, f64::max)
    }

    pub fn xi_text(&self) -> String {
        self.xi.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(" ")
    }
}

/// Smallest seed whose beacon maximum sits at `node`.
pub fn seed_for_root(n: usize, node: usize) -> u64 {
    (0u64..)
        .find(|&s| {
            let xi = draw_beacons(n, s);
            (0..n).max_by(|&a, &b| xi[a].total_cmp(&xi[b])) == Some(node)
        })
        .expect("some seed elects every node")
}
