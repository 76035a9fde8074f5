//! Network topology: the row-stochastic weight matrix and its digraph.
//!
//! `W[i][j] > 0` means node `i` listens to node `j`, i.e. information flows
//! along the directed edge `j -> i`.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::format::{parse_json_matrix, MatrixJson};
use crate::linalg::{is_row_stochastic, left_dominant_vector, DenseMatrix, Vector};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    w: DenseMatrix,
}

impl Topology {
    /// Validates `w` as a row-stochastic matrix. Rows within `1e-9` of unit
    /// sum are renormalised to unit sum.
    pub fn validate(w: DenseMatrix) -> Result<Self> {
        is_row_stochastic(&w)?;
        let mut w = w;
        for i in 0..w.nrows() {
            let s: f64 = w.row(i).sum();
            if (s - 1.0).abs() > 1e-12 {
                w.row_mut(i).scale_mut(1.0 / s);
            }
        }
        Ok(Topology { w })
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    pub fn weights(&self) -> &DenseMatrix {
        &self.w
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.w[(i, j)] != 0.0
    }

    /// Every `(i, j)` with `W_ij > 0`, row-major.
    pub fn support(&self) -> Vec<(usize, usize)> {
        let n = self.n();
        (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|&(i, j)| self.has_edge(i, j))
            .collect()
    }

    pub fn support_size(&self) -> usize {
        self.w.iter().filter(|v| **v != 0.0).count()
    }

    /// Nodes `j != i` that node `i` listens to.
    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        (0..self.n()).filter(|&j| j != i && self.has_edge(i, j)).collect()
    }

    pub fn stationary(&self) -> Result<Vector> {
        left_dominant_vector(&self.w)
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Repr<'a> {
            n: usize,
            w: MatrixJson<'a>,
        }
        serde_json::to_string_pretty(&Repr { n: self.n(), w: MatrixJson(&self.w) })
            .expect("matrix serialisation cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let v: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("topology json: {e}")))?;
        let w = parse_json_matrix(&v["w"])?;
        if let Some(n) = v["n"].as_u64() {
            if n as usize != w.nrows() {
                return Err(Error::DimensionMismatch(format!(
                    "declared n = {n} but matrix has {} rows",
                    w.nrows()
                )));
            }
        }
        Topology::validate(w)
    }

    pub fn to_text(&self) -> String {
        crate::format::matrix_to_text(&self.w)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Topology::validate(crate::format::matrix_from_text(text)?)
    }
}

/// Consensus value `pi^T x0` reached under `W`.
pub fn consensus_point(t: &Topology, x0: &Vector) -> Result<f64> {
    if x0.len() != t.n() {
        return Err(Error::DimensionMismatch(format!(
            "x0 has length {}, network has {} nodes",
            x0.len(),
            t.n()
        )));
    }
    Ok(t.stationary()?.dot(x0))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GraphReport {
    pub strongly_connected: bool,
    pub root_nodes: Vec<usize>,
    pub root_scc_aperiodic: bool,
    pub root_exists: bool,
}

/// Structural checks on the digraph of any square nonnegative matrix.
pub fn structural_report(w: &DenseMatrix) -> GraphReport {
    let n = w.nrows();
    // successors along the information flow j -> i
    let succ: Vec<Vec<usize>> = (0..n)
        .map(|j| (0..n).filter(|&i| w[(i, j)] != 0.0).collect())
        .collect();
    let comp = strongly_connected_components(&succ);
    let n_comp = comp.iter().copied().max().map_or(0, |c| c + 1);
    let mut has_incoming = vec![false; n_comp];
    for (u, outs) in succ.iter().enumerate() {
        for &v in outs {
            if comp[u] != comp[v] {
                has_incoming[comp[v]] = true;
            }
        }
    }
    let sources: Vec<usize> = (0..n_comp).filter(|&c| !has_incoming[c]).collect();
    let root_nodes: Vec<usize> = if sources.len() == 1 {
        (0..n).filter(|&v| comp[v] == sources[0]).collect()
    } else {
        Vec::new()
    };
    let root_scc_aperiodic = !root_nodes.is_empty() && component_period(&succ, &comp, root_nodes[0]) == 1;
    GraphReport {
        strongly_connected: n_comp == 1,
        root_exists: !root_nodes.is_empty(),
        root_nodes,
        root_scc_aperiodic,
    }
}

/// Tarjan's algorithm, iterative. Returns a component id per node.
fn strongly_connected_components(succ: &[Vec<usize>]) -> Vec<usize> {
    let n = succ.len();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut comp = vec![usize::MAX; n];
    let mut next_index = 0;
    let mut next_comp = 0;
    for start in 0..n {
        if index[start] != usize::MAX {
            continue;
        }
        let mut call: Vec<(usize, usize)> = vec![(start, 0)];
        index[start] = next_index;
        low[start] = next_index;
        next_index += 1;
        stack.push(start);
        on_stack[start] = true;
        while let Some(&mut (v, ref mut k)) = call.last_mut() {
            if *k < succ[v].len() {
                let u = succ[v][*k];
                *k += 1;
                if index[u] == usize::MAX {
                    index[u] = next_index;
                    low[u] = next_index;
                    next_index += 1;
                    stack.push(u);
                    on_stack[u] = true;
                    call.push((u, 0));
                } else if on_stack[u] {
                    low[v] = low[v].min(index[u]);
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    while let Some(u) = stack.pop() {
                        on_stack[u] = false;
                        comp[u] = next_comp;
                        if u == v {
                            break;
                        }
                    }
                    next_comp += 1;
                }
            }
        }
    }
    comp
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Period of the component containing `start`: gcd of
/// `level(u) + 1 - level(v)` over its internal edges `u -> v`.
/// A single node without a self-loop has no cycle and period 0.
fn component_period(succ: &[Vec<usize>], comp: &[usize], start: usize) -> usize {
    let c = comp[start];
    let mut level = vec![usize::MAX; succ.len()];
    level[start] = 0;
    let mut queue = VecDeque::from([start]);
    while let Some(u) = queue.pop_front() {
        for &v in &succ[u] {
            if comp[v] == c && level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
        }
    }
    let mut g = 0;
    for u in (0..succ.len()).filter(|&u| comp[u] == c) {
        for &v in succ[u].iter().filter(|&&v| comp[v] == c) {
            g = gcd(g, (level[u] + 1).abs_diff(level[v]));
        }
    }
    g
}

/// Shortest directed hop counts from `root` along the information flow;
/// `None` for unreachable nodes.
pub fn bfs_distances(w: &DenseMatrix, root: usize) -> Vec<Option<usize>> {
    let n = w.nrows();
    let mut dist = vec![None; n];
    dist[root] = Some(0);
    let mut queue = VecDeque::from([root]);
    while let Some(j) = queue.pop_front() {
        let dj = dist[j].expect("queued nodes have a distance");
        for i in 0..n {
            if w[(i, j)] != 0.0 && dist[i].is_none() {
                dist[i] = Some(dj + 1);
                queue.push_back(i);
            }
        }
    }
    dist
}

/// Seeded strongly connected network with self-loops on every node.
///
/// Off-diagonal edges appear independently with probability `density`; a
/// random Hamiltonian cycle is added to guarantee strong connectivity.
/// Weights are uniform on `[0.05, 1)` before row normalisation.
pub fn random_topology(n: usize, density: f64, seed: u64) -> Result<Topology> {
    if n < 2 {
        return Err(Error::Config(format!("random network needs n >= 2, got {n}")));
    }
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::Config(format!("density must lie in (0, 1], got {density}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mask = vec![vec![false; n]; n];
    for (i, row) in mask.iter_mut().enumerate() {
        for (j, m) in row.iter_mut().enumerate() {
            let draw: f64 = rng.random();
            *m = i == j || draw < density;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    for k in 0..n {
        let from = order[k];
        let to = order[(k + 1) % n];
        mask[to][from] = true;
    }
    let mut w = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if mask[i][j] {
                w[(i, j)] = rng.random_range(0.05..1.0);
            }
        }
        let s: f64 = w.row(i).sum();
        w.row_mut(i).scale_mut(1.0 / s);
    }
    Topology::validate(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ring(n: usize, self_loop: bool) -> DenseMatrix {
        let mut w = DenseMatrix::zeros(n, n);
        for i in 0..n {
            w[(i, (i + n - 1) % n)] = 1.0;
        }
        if self_loop {
            w[(0, 0)] = 0.5;
            w[(0, n - 1)] = 0.5;
        }
        w
    }

    #[test]
    fn validate_examples() {
        let t = Topology::validate(DenseMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5])).unwrap();
        assert_eq!(t.support_size(), 4);
        assert!(matches!(
            Topology::validate(DenseMatrix::from_row_slice(2, 2, &[0.5, 0.6, 0.5, 0.5])),
            Err(Error::NotStochastic { .. })
        ));
        let t = Topology::validate(DenseMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.3, 0.7])).unwrap();
        assert_eq!(t.support_size(), 3);
        assert!(matches!(
            Topology::validate(DenseMatrix::from_row_slice(2, 2, &[1.5, -0.5, 0.3, 0.7])),
            Err(Error::NegativeEntry { .. })
        ));
    }

    #[test]
    fn ring_period() {
        let r = structural_report(&ring(4, false));
        assert!(r.strongly_connected);
        assert!(!r.root_scc_aperiodic);
        let r = structural_report(&ring(4, true));
        assert!(r.root_scc_aperiodic);
        assert_eq!(r.root_nodes, vec![0, 1, 2, 3]);
    }

    #[test]
    fn star_root() {
        let mut w = DenseMatrix::zeros(4, 4);
        w[(0, 0)] = 1.0;
        for leaf in 1..4 {
            w[(leaf, 0)] = 1.0;
        }
        let r = structural_report(&w);
        assert!(!r.strongly_connected);
        assert_eq!(r.root_nodes, vec![0]);
        assert!(r.root_exists && r.root_scc_aperiodic);
    }

    #[test]
    fn two_sources_have_no_root() {
        let w = DenseMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.3, 0.3, 0.4]);
        let r = structural_report(&w);
        assert!(!r.root_exists && r.root_nodes.is_empty());
    }

    #[test]
    fn period_matches_cycle_enumeration() {
        // two cycles of lengths 2 and 4 through node 0 -> gcd 2
        let mut w = DenseMatrix::zeros(4, 4);
        w[(1, 0)] = 1.0;
        w[(0, 1)] = 0.5;
        w[(2, 1)] = 1.0;
        w[(3, 2)] = 1.0;
        w[(0, 3)] = 0.5;
        assert_eq!(
            component_period(
                &(0..4).map(|j| (0..4).filter(|&i| w[(i, j)] != 0.0).collect()).collect::<Vec<_>>(),
                &[0; 4],
                0
            ),
            2
        );
    }

    #[test]
    fn random_generator() {
        let t = random_topology(2, 1.0, 0).unwrap();
        assert_eq!(t.support_size(), 4);
        let a = random_topology(8, 0.4, 1).unwrap();
        let b = random_topology(8, 0.4, 1).unwrap();
        assert_eq!(a, b);
        assert!(structural_report(a.weights()).strongly_connected);
    }

    #[test]
    fn consensus_examples() {
        let t = Topology::validate(DenseMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5])).unwrap();
        let c = consensus_point(&t, &Vector::from_vec(vec![1.0, 3.0])).unwrap();
        assert!((c - 2.0).abs() < 1e-15);
        let t = random_topology(6, 0.3, 9).unwrap();
        let c = consensus_point(&t, &Vector::from_element(6, 4.25)).unwrap();
        assert!((c - 4.25).abs() < 1e-12);
    }

    #[test]
    fn json_and_text_round_trip() {
        let t = random_topology(5, 0.5, 3).unwrap();
        assert_eq!(Topology::from_json(&t.to_json()).unwrap(), t);
        assert_eq!(Topology::from_text(&t.to_text()).unwrap(), t);
    }

    #[test]
    fn bfs_on_path() {
        let mut w = DenseMatrix::zeros(3, 3);
        w[(0, 0)] = 1.0;
        w[(1, 0)] = 1.0;
        w[(2, 1)] = 1.0;
        assert_eq!(bfs_distances(&w, 0), vec![Some(0), Some(1), Some(2)]);
        assert_eq!(bfs_distances(&w, 2), vec![None, None, Some(0)]);
    }
}
