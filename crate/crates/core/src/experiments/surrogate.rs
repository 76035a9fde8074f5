//! Built-in 8-node network used by the reproduction harness.
//!
//! Hand-written rather than drawn: node 1 has the weak in-edge from node 7
//! (weight 0.1) and the elected root is node 8, so the "hide only the
//! weakest edge" case at small budgets can be checked by name.

use crate::design::protocol::seed_for_root;
use crate::graph::Topology;
use crate::linalg::{DenseMatrix, Vector};
use crate::Result;

pub const NAME: &str = "surrogate8";

/// Root (0-based) the reproduction runs elect.
pub const ROOT: usize = 7;

const ROWS: [&[(usize, f64)]; 8] = [
    &[(0, 0.30), (2, 0.25), (6, 0.10), (7, 0.35)],
    &[(1, 0.40), (0, 0.35), (3, 0.25)],
    &[(2, 0.30), (1, 0.45), (4, 0.25)],
    &[(3, 0.35), (2, 0.40), (7, 0.25)],
    &[(4, 0.20), (3, 0.50), (5, 0.30)],
    &[(5, 0.45), (4, 0.30), (0, 0.25)],
    &[(6, 0.40), (5, 0.35), (1, 0.25)],
    &[(7, 0.50), (6, 0.20), (4, 0.30)],
];

pub fn network() -> Result<Topology> {
    let mut w = DenseMatrix::zeros(8, 8);
    for (i, row) in ROWS.iter().enumerate() {
        for &(j, v) in row.iter() {
            w[(i, j)] = v;
        }
    }
    Topology::validate(w)
}

pub fn initial_state() -> Vector {
    Vector::from_vec(vec![-2.0, -48.0, -35.0, -50.0, -56.0, 60.0, 0.0, -84.0])
}

/// Beacon seed that elects [`ROOT`].
pub fn beacon_seed() -> u64 {
    seed_for_root(8, ROOT)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::structural_report;

    #[test]
    fn surrogate_is_strongly_connected_and_aperiodic() {
        let t = network().unwrap();
        let r = structural_report(t.weights());
        assert!(r.strongly_connected && r.root_scc_aperiodic);
        assert_eq!(t.weights()[(0, 6)], 0.1);
    }
}
