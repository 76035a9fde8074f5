//! Per-node budgeted row design: hide as many incoming edges as an `l1`
//! budget allows while keeping mandatory edges strictly positive.

use serde::Serialize;

use crate::{Error, Result};

/// Slack applied to every budget comparison so that a budget landing
/// exactly on a threshold is decided the same way by all three solvers.
pub const BUDGET_TOL: f64 = 1e-12;

const BRUTE_FORCE_LIMIT: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct RowDesignProblem {
    /// Full weight row; support is where the weight is positive.
    pub weights: Vec<f64>,
    /// Entries that must stay strictly positive (one parent, or self plus
    /// one parent for the root).
    pub mandatory: Vec<usize>,
    pub tau: f64,
    /// Positivity margin; `None` selects `1e-4` times the smallest positive
    /// weight of the row.
    pub delta: Option<f64>,
}

/// Operation counts recorded by [`heuristic_row_design`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct RowOps {
    pub sorts: usize,
    pub sorted_len: usize,
    /// Entry visits across all linear passes.
    pub visits: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowDesignResult {
    pub k_row: Vec<f64>,
    pub support_count: usize,
    pub hidden: Vec<usize>,
    pub budget_used: f64,
    pub notes: Vec<String>,
    pub ops: RowOps,
}

impl RowDesignProblem {
    pub fn new(weights: Vec<f64>, mandatory: Vec<usize>, tau: f64) -> Self {
        RowDesignProblem { weights, mandatory, tau, delta: None }
    }

    fn check(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::BudgetDegenerate(self.tau));
        }
        let n = self.weights.len();
        if self.mandatory.is_empty() || self.mandatory.iter().any(|&j| j >= n) {
            return Err(Error::Config("mandatory entries must be valid row indices".into()));
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config("row weights must be finite and nonnegative".into()));
        }
        Ok(())
    }

    /// Positive entries that are not mandatory.
    fn candidates(&self) -> Vec<usize> {
        (0..self.weights.len())
            .filter(|j| self.weights[*j] > 0.0 && !self.mandatory.contains(j))
            .collect()
    }

    fn mandatory_weight(&self) -> f64 {
        self.mandatory.iter().map(|&j| self.weights[j]).sum()
    }

    fn row_total(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn delta(&self) -> f64 {
        self.delta.unwrap_or_else(|| {
            1e-4 * self
                .weights
                .iter()
                .filter(|w| **w > 0.0)
                .fold(f64::INFINITY, |m, w| m.min(*w))
        })
    }
}

fn ascending(weights: &[f64], idx: &mut [usize]) {
    idx.sort_by(|&a, &b| weights[a].total_cmp(&weights[b]).then(a.cmp(&b)));
}

/// Greedy row design: hide the lightest candidates while twice the hidden
/// mass fits in the budget, spread the hidden mass evenly over the kept
/// entries, then spend the remaining budget on a symmetric shift between
/// the lighter and heavier halves of the kept entries.
pub fn heuristic_row_design(p: &RowDesignProblem) -> Result<RowDesignResult> {
    p.check()?;
    let n = p.weights.len();
    let w = &p.weights;
    let tau = p.tau;
    let delta = p.delta();
    let mut ops = RowOps::default();
    let mut notes = Vec::new();
    let mut k = vec![0.0; n];

    let mut order = p.candidates();
    ops.visits += n;
    ascending(w, &mut order);
    ops.sorts += 1;
    ops.sorted_len = order.len();

    let mut hidden = Vec::new();
    let mut hidden_mass = 0.0;
    for &j in &order {
        ops.visits += 1;
        if 2.0 * (hidden_mass + w[j]) <= tau + BUDGET_TOL {
            hidden.push(j);
            hidden_mass += w[j];
        } else {
            break;
        }
    }
    for &j in &hidden {
        k[j] = -w[j];
        ops.visits += 1;
    }

    // kept entries stay in ascending-weight order; mandatory ones merge in
    let mut kept: Vec<usize> = order[hidden.len()..].to_vec();
    for &m in &p.mandatory {
        let at = kept
            .iter()
            .position(|&j| (w[j], j) > (w[m], m))
            .unwrap_or(kept.len());
        kept.insert(at, m);
        ops.visits += kept.len();
    }
    let delta_1 = hidden_mass / kept.len() as f64;
    for &j in &kept {
        k[j] += delta_1;
        ops.visits += 1;
    }

    if kept.len() > 1 {
        let residual = tau - 2.0 * hidden_mass;
        let tau_r = if kept.len() == 2 {
            if residual > 1.0 {
                notes.push("remaining budget capped at 1 for two kept entries".into());
            }
            residual.min(1.0)
        } else {
            residual
        };
        let h = kept.len() / 2;
        let headroom = kept
            .iter()
            .map(|&j| w[j] + k[j])
            .fold(f64::INFINITY, f64::min);
        ops.visits += kept.len();
        if delta >= headroom {
            return Err(Error::DeltaTooLarge { delta, min_weight: headroom });
        }
        let delta_2 = (tau_r / (2.0 * h as f64)).min(headroom - delta).max(0.0);
        let (lighter, rest) = kept.split_at(h);
        let heavier = &rest[rest.len() - h..];
        for &j in lighter {
            k[j] += delta_2;
        }
        for &j in heavier {
            k[j] -= delta_2;
        }
        ops.visits += 2 * h;
        for (pos, &j1) in heavier.iter().enumerate() {
            if k[j1] == 0.0 {
                let j2 = lighter[pos];
                k[j1] += delta;
                k[j2] -= delta;
                notes.push(format!("entry {} kept away from its true weight by delta", j1 + 1));
            }
        }
        ops.visits += h;
    }

    let budget_used: f64 = k.iter().map(|v| v.abs()).sum();
    ops.visits += n;
    if budget_used >= tau {
        notes.push("row feedback uses the whole budget".into());
    }
    let support_count = (0..n).filter(|&j| w[j] + k[j] > 0.0).count();
    Ok(RowDesignResult { k_row: k, support_count, hidden, budget_used, notes, ops })
}

/// Smallest support size reachable within the budget, in closed form:
/// the mandatory entries plus the fewest heaviest candidates whose weight
/// covers `total - tau/2 - mandatory weight`.
pub fn optimal_support_count(p: &RowDesignProblem) -> Result<usize> {
    p.check()?;
    let mut weights: Vec<f64> = p.candidates().iter().map(|&j| p.weights[j]).collect();
    weights.sort_by(|a, b| b.total_cmp(a));
    let need = p.row_total() - p.tau / 2.0 - p.mandatory_weight();
    let mut covered = 0.0;
    for c in 0..=weights.len() {
        if covered >= need - BUDGET_TOL {
            return Ok(p.mandatory.len() + c);
        }
        if c < weights.len() {
            covered += weights[c];
        }
    }
    Err(Error::NoFeasibleCount)
}

/// Exhaustive reference: the smallest support set `S` containing the
/// mandatory entries for which moving all outside mass into `S` costs at
/// most `tau` in `l1`.
pub fn brute_force_row_oracle(p: &RowDesignProblem) -> Result<usize> {
    p.check()?;
    let cands = p.candidates();
    let support = cands.len() + p.mandatory.len();
    if support > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge(support));
    }
    let total = p.row_total();
    let base = p.mandatory_weight();
    let mut best: Option<usize> = None;
    for mask in 0u32..(1u32 << cands.len()) {
        let kept: f64 = base
            + (0..cands.len())
                .filter(|b| mask & (1 << b) != 0)
                .map(|b| p.weights[cands[b]])
                .sum::<f64>();
        let size = p.mandatory.len() + mask.count_ones() as usize;
        if 2.0 * (total - kept) <= p.tau + 2.0 * BUDGET_TOL && best.is_none_or(|b| size < b) {
            best = Some(size);
        }
    }
    best.ok_or(Error::NoFeasibleCount)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row() -> Vec<f64> {
        vec![0.2, 0.3, 0.4, 0.1]
    }

    #[test]
    fn large_budget_keeps_only_parent() {
        let p = RowDesignProblem::new(row(), vec![1], 1.5);
        let r = heuristic_row_design(&p).unwrap();
        assert_eq!(r.support_count, 1);
        let mut hidden = r.hidden.clone();
        hidden.sort_unstable();
        assert_eq!(hidden, vec![0, 2, 3]);
        assert!((r.k_row.iter().sum::<f64>()).abs() < 1e-15);
        assert!(r.budget_used <= 1.5);
        assert_eq!(optimal_support_count(&p).unwrap(), 1);
        assert_eq!(brute_force_row_oracle(&p).unwrap(), 1);
    }

    #[test]
    fn medium_budget_keeps_heaviest_candidate() {
        let p = RowDesignProblem::new(row(), vec![1], 0.8);
        let r = heuristic_row_design(&p).unwrap();
        assert_eq!(r.support_count, 2);
        assert!(r.k_row[1] + 0.3 > 0.0 && r.k_row[2] + 0.4 > 0.0);
        assert_eq!(optimal_support_count(&p).unwrap(), 2);
        assert_eq!(brute_force_row_oracle(&p).unwrap(), 2);
    }

    #[test]
    fn boundary_budget() {
        let p = RowDesignProblem::new(row(), vec![1], 1.4);
        assert_eq!(optimal_support_count(&p).unwrap(), 1);
        assert_eq!(brute_force_row_oracle(&p).unwrap(), 1);
        assert_eq!(heuristic_row_design(&p).unwrap().support_count, 1);
    }

    #[test]
    fn tiny_budget_keeps_everything() {
        let p = RowDesignProblem::new(row(), vec![1], 1e-9);
        let r = heuristic_row_design(&p).unwrap();
        assert_eq!(r.support_count, 4);
        assert!(r.budget_used < 1e-8);
    }

    #[test]
    fn root_cases() {
        let w = vec![0.25; 4];
        let p = RowDesignProblem::new(w.clone(), vec![0, 1], 1.0);
        assert_eq!(optimal_support_count(&p).unwrap(), 2);
        assert_eq!(brute_force_row_oracle(&p).unwrap(), 2);
        let p = RowDesignProblem::new(w, vec![0, 1], 0.5);
        assert_eq!(optimal_support_count(&p).unwrap(), 3);
        assert_eq!(brute_force_row_oracle(&p).unwrap(), 3);
        assert_eq!(heuristic_row_design(&p).unwrap().support_count, 3);
    }

    #[test]
    fn single_neighbour() {
        let p = RowDesignProblem::new(vec![0.0, 1.0], vec![1], 3.0);
        assert_eq!(brute_force_row_oracle(&p).unwrap(), 1);
        assert_eq!(heuristic_row_design(&p).unwrap().k_row, vec![0.0, 0.0]);
    }

    #[test]
    fn uniform_row_just_below_threshold() {
        let k = 5;
        let tau = 2.0 * (1.0 - 1.0 / k as f64) - 1e-6;
        let p = RowDesignProblem::new(vec![1.0 / k as f64; k], vec![0], tau);
        assert_eq!(brute_force_row_oracle(&p).unwrap(), 2);
        assert_eq!(optimal_support_count(&p).unwrap(), 2);
    }

    #[test]
    fn degenerate_inputs() {
        assert_eq!(
            heuristic_row_design(&RowDesignProblem::new(row(), vec![1], 0.0)),
            Err(Error::BudgetDegenerate(0.0))
        );
        let mut p = RowDesignProblem::new(row(), vec![1], 0.3);
        p.delta = Some(0.5);
        assert!(matches!(heuristic_row_design(&p), Err(Error::DeltaTooLarge { .. })));
        let p = RowDesignProblem::new(vec![1.0 / 17.0; 17], vec![0], 0.3);
        assert_eq!(brute_force_row_oracle(&p), Err(Error::TooLarge(17)));
    }

    #[test]
    fn one_sort_per_row() {
        let p = RowDesignProblem::new(vec![0.1, 0.15, 0.2, 0.05, 0.3, 0.2], vec![2], 0.35);
        let r = heuristic_row_design(&p).unwrap();
        assert_eq!(r.ops.sorts, 1);
        assert_eq!(r.ops.sorted_len, 5);
        assert!(r.ops.visits <= 12 * 6 + 6 * 6);
    }
}
