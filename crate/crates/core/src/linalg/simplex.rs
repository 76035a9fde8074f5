use super::{nullspace_basis, pseudo_inverse, DenseMatrix, Vector};
use crate::{Error, Result};

/// `A_e x = b_e`, `A_i x <= b_i` over free variables `x`. Rows listed in
/// `strict_rows` must hold with slack at least `strictness_margin`.
#[derive(Debug, Clone)]
pub struct LinearFeasibilityProblem {
    pub equality_lhs: DenseMatrix,
    pub equality_rhs: Vector,
    pub inequality_lhs: DenseMatrix,
    pub inequality_rhs: Vector,
    pub strict_rows: Vec<usize>,
    pub strictness_margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FeasibilityOutcome {
    Feasible(Vec<f64>),
    Infeasible,
}

const PIVOT_TOL: f64 = 1e-9;
const EQ_TOL: f64 = 1e-9;
// degenerate pivots leave vertices a few ulps-of-scale outside their bounds;
// callers re-verify the quantities they care about
const INEQ_TOL: f64 = 1e-7;
const MAX_PIVOTS: usize = 200_000;
const ELIMINATION_RANK_TOL: f64 = 1e-10;

impl LinearFeasibilityProblem {
    pub fn new(num_vars: usize) -> Self {
        LinearFeasibilityProblem {
            equality_lhs: DenseMatrix::zeros(0, num_vars),
            equality_rhs: Vector::zeros(0),
            inequality_lhs: DenseMatrix::zeros(0, num_vars),
            inequality_rhs: Vector::zeros(0),
            strict_rows: Vec::new(),
            strictness_margin: 1e-6,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.equality_lhs.ncols()
    }

    pub fn add_equality(&mut self, row: &[f64], rhs: f64) {
        self.equality_lhs = append_row(&self.equality_lhs, row);
        self.equality_rhs = self.equality_rhs.push(rhs);
    }

    pub fn add_inequality(&mut self, row: &[f64], rhs: f64) {
        self.inequality_lhs = append_row(&self.inequality_lhs, row);
        self.inequality_rhs = self.inequality_rhs.push(rhs);
    }

    pub fn add_strict_inequality(&mut self, row: &[f64], rhs: f64) {
        self.strict_rows.push(self.inequality_lhs.nrows());
        self.add_inequality(row, rhs);
    }

    fn check_dims(&self) -> Result<()> {
        let n = self.equality_lhs.ncols();
        let ok = self.inequality_lhs.ncols() == n
            && self.equality_rhs.len() == self.equality_lhs.nrows()
            && self.inequality_rhs.len() == self.inequality_lhs.nrows()
            && self.strict_rows.iter().all(|&r| r < self.inequality_lhs.nrows());
        if !ok {
            return Err(Error::DimensionMismatch("inconsistent feasibility problem".into()));
        }
        if !(self.strictness_margin > 0.0) {
            return Err(Error::DimensionMismatch("strictness margin must be positive".into()));
        }
        Ok(())
    }

    fn effective_rhs(&self, row: usize) -> f64 {
        if self.strict_rows.contains(&row) {
            self.inequality_rhs[row] - self.strictness_margin
        } else {
            self.inequality_rhs[row]
        }
    }

    /// Independent re-check of a candidate point.
    pub fn is_satisfied_by(&self, x: &[f64]) -> bool {
        let xv = Vector::from_column_slice(x);
        let eq = &self.equality_lhs * &xv - &self.equality_rhs;
        if eq.iter().any(|r| r.abs() > EQ_TOL) {
            return false;
        }
        let ineq = &self.inequality_lhs * &xv;
        (0..ineq.len()).all(|r| {
            let b = self.effective_rhs(r);
            ineq[r] <= b + INEQ_TOL * b.abs().max(1.0)
        })
    }
}

fn append_row(a: &DenseMatrix, row: &[f64]) -> DenseMatrix {
    assert_eq!(row.len(), a.ncols(), "row length must match variable count");
    let r = a.nrows();
    let mut out = a.clone().insert_row(r, 0.0);
    for (j, v) in row.iter().enumerate() {
        out[(r, j)] = *v;
    }
    out
}

/// Finds a point of the feasible set or proves it empty.
pub fn solve_feasibility(p: &LinearFeasibilityProblem) -> Result<FeasibilityOutcome> {
    solve_with_objective(p, None)
}

/// Like [`solve_feasibility`], then pushes the point towards the minimum of
/// `cost . x`. If the objective is unbounded the last feasible vertex is
/// returned.
pub fn solve_with_objective(
    p: &LinearFeasibilityProblem,
    cost: Option<&[f64]>,
) -> Result<FeasibilityOutcome> {
    p.check_dims()?;
    let nv = p.num_vars();
    if let Some(c) = cost {
        if c.len() != nv {
            return Err(Error::DimensionMismatch("cost length differs from variable count".into()));
        }
    }
    let Some(reduced) = eliminate_equalities(p) else {
        return Ok(FeasibilityOutcome::Infeasible);
    };
    let reduced_cost: Option<Vec<f64>> =
        cost.map(|c| (reduced.basis.transpose() * Vector::from_column_slice(c)).as_slice().to_vec());
    let y = if reduced.problem.num_vars() == 0 {
        let y: Vec<f64> = Vec::new();
        let ineq = &reduced.problem.inequality_lhs * Vector::zeros(0);
        let fits = (0..ineq.len()).all(|r| {
            let b = reduced.problem.effective_rhs(r);
            ineq[r] <= b + INEQ_TOL * b.abs().max(1.0)
        });
        if !fits {
            return Ok(FeasibilityOutcome::Infeasible);
        }
        y
    } else {
        match solve_inequalities(&reduced.problem, reduced_cost.as_deref())? {
            Some(y) => y,
            None => return Ok(FeasibilityOutcome::Infeasible),
        }
    };
    let x = &reduced.offset + &reduced.basis * Vector::from_vec(y);
    let x = x.as_slice().to_vec();
    if !p.is_satisfied_by(&x) {
        return Err(Error::NumericalFailure(
            "simplex point fails the constraint re-check".into(),
        ));
    }
    Ok(FeasibilityOutcome::Feasible(x))
}

/// `x = offset + basis * y` parametrises the equality set; `problem`
/// holds the inequalities in terms of `y`.
struct Reduced {
    problem: LinearFeasibilityProblem,
    offset: Vector,
    basis: DenseMatrix,
}

/// Replaces the equalities by a least-squares particular solution and an
/// SVD nullspace basis, so redundant or nearly dependent equality rows
/// never reach the tableau. `None` when the equalities are inconsistent.
fn eliminate_equalities(p: &LinearFeasibilityProblem) -> Option<Reduced> {
    let nv = p.num_vars();
    let (offset, basis) = if p.equality_lhs.nrows() == 0 {
        (Vector::zeros(nv), DenseMatrix::identity(nv, nv))
    } else {
        let offset = pseudo_inverse(&p.equality_lhs, ELIMINATION_RANK_TOL) * &p.equality_rhs;
        let residual = (&p.equality_lhs * &offset - &p.equality_rhs).amax();
        if residual > EQ_TOL {
            return None;
        }
        (offset, nullspace_basis(&p.equality_lhs, ELIMINATION_RANK_TOL))
    };
    let shift = &p.inequality_lhs * &offset;
    let problem = LinearFeasibilityProblem {
        equality_lhs: DenseMatrix::zeros(0, basis.ncols()),
        equality_rhs: Vector::zeros(0),
        inequality_lhs: &p.inequality_lhs * &basis,
        inequality_rhs: &p.inequality_rhs - shift,
        strict_rows: p.strict_rows.clone(),
        strictness_margin: p.strictness_margin,
    };
    Some(Reduced { problem, offset, basis })
}

/// Two-phase simplex on an inequality-only problem. `None` if infeasible.
fn solve_inequalities(p: &LinearFeasibilityProblem, cost: Option<&[f64]>) -> Result<Option<Vec<f64>>> {
    let nv = p.num_vars();
    let mut t = Tableau::build(p);
    let phase_one_obj = t.phase_one()?;
    let scale = p.inequality_rhs.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    if phase_one_obj > 1e-9 * scale {
        return Ok(None);
    }
    t.drive_out_artificials();
    if let Some(c) = cost {
        t.phase_two(c)?;
    }
    let mut x = t.primal(nv);
    if !p.is_satisfied_by(&x) {
        if let Some(refined) = t.resolve_basis(&Tableau::build(p)) {
            x = refined;
        }
    }
    Ok(Some(x))
}

/// Dense tableau over columns `[u (nv) | w (nv) | slacks | artificials | rhs]`
/// with `x = u - w`.
struct Tableau {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    basis: Vec<usize>,
    nv: usize,
    first_artificial: usize,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * (self.cols + 1) + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.data[r * (self.cols + 1) + self.cols]
    }

    fn build(p: &LinearFeasibilityProblem) -> Self {
        let nv = p.num_vars();
        let me = p.equality_lhs.nrows();
        let mi = p.inequality_lhs.nrows();
        let rows = me + mi;
        let first_slack = 2 * nv;
        // slack rows with nonnegative rhs can start basic on the slack
        let mut needs_art = vec![true; rows];
        let mut rhs_all = vec![0.0; rows];
        for r in 0..me {
            rhs_all[r] = p.equality_rhs[r];
        }
        for r in 0..mi {
            rhs_all[me + r] = p.effective_rhs(r);
            needs_art[me + r] = rhs_all[me + r] < 0.0;
        }
        let n_art = needs_art.iter().filter(|b| **b).count();
        let first_artificial = first_slack + mi;
        let cols = first_artificial + n_art;
        let width = cols + 1;
        let mut data = vec![0.0; rows * width];
        let mut basis = vec![0; rows];
        let mut art = first_artificial;
        for r in 0..rows {
            let (coeffs, rhs) = if r < me {
                (p.equality_lhs.row(r), rhs_all[r])
            } else {
                (p.inequality_lhs.row(r - me), rhs_all[r])
            };
            let sign = if rhs < 0.0 { -1.0 } else { 1.0 };
            let base = r * width;
            for j in 0..nv {
                data[base + j] = sign * coeffs[j];
                data[base + nv + j] = -sign * coeffs[j];
            }
            if r >= me {
                data[base + first_slack + (r - me)] = sign;
            }
            data[base + cols] = sign * rhs;
            if needs_art[r] {
                data[base + art] = 1.0;
                basis[r] = art;
                art += 1;
            } else {
                basis[r] = first_slack + (r - me);
            }
        }
        Tableau { rows, cols, data, basis, nv, first_artificial }
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let width = self.cols + 1;
        let piv = self.at(pr, pc);
        for c in 0..width {
            self.data[pr * width + c] /= piv;
        }
        self.data[pr * width + pc] = 1.0;
        for r in 0..self.rows {
            if r == pr {
                continue;
            }
            let f = self.at(r, pc);
            if f == 0.0 {
                continue;
            }
            for c in 0..width {
                let v = self.data[pr * width + c];
                if v != 0.0 {
                    self.data[r * width + c] -= f * v;
                }
            }
            self.data[r * width + pc] = 0.0;
        }
        self.basis[pr] = pc;
    }

    /// Minimises `cost . columns` with Bland's rule over columns `< limit`.
    /// Returns `false` when the objective is unbounded.
    fn run(&mut self, cost: &[f64], limit: usize) -> Result<bool> {
        for _ in 0..MAX_PIVOTS {
            let mut entering = None;
            for c in 0..limit {
                if self.basis.contains(&c) {
                    continue;
                }
                let reduced = cost[c]
                    - (0..self.rows).map(|r| cost[self.basis[r]] * self.at(r, c)).sum::<f64>();
                if reduced < -PIVOT_TOL {
                    entering = Some(c);
                    break;
                }
            }
            let Some(pc) = entering else {
                return Ok(true);
            };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                let a = self.at(r, pc);
                if a > PIVOT_TOL {
                    let ratio = self.rhs(r).max(0.0) / a;
                    let better = match leave {
                        None => true,
                        Some((lr, best)) => {
                            ratio < best - 1e-15
                                || (ratio <= best + 1e-15 && self.basis[r] < self.basis[lr])
                        }
                    };
                    if better {
                        leave = Some((r, ratio));
                    }
                }
            }
            match leave {
                Some((pr, _)) => self.pivot(pr, pc),
                None => return Ok(false),
            }
        }
        Err(Error::NumericalFailure("simplex pivot limit reached".into()))
    }

    fn phase_one(&mut self) -> Result<f64> {
        let mut cost = vec![0.0; self.cols];
        for c in cost.iter_mut().skip(self.first_artificial) {
            *c = 1.0;
        }
        self.run(&cost, self.cols)?;
        Ok((0..self.rows)
            .filter(|&r| self.basis[r] >= self.first_artificial)
            .map(|r| self.rhs(r))
            .sum())
    }

    fn drive_out_artificials(&mut self) {
        for r in 0..self.rows {
            if self.basis[r] < self.first_artificial {
                continue;
            }
            let candidate = (0..self.first_artificial)
                .filter(|c| !self.basis.contains(c))
                .max_by(|&a, &b| self.at(r, a).abs().total_cmp(&self.at(r, b).abs()));
            if let Some(c) = candidate {
                if self.at(r, c).abs() > PIVOT_TOL {
                    // phase one left this artificial at zero up to rounding;
                    // dividing that residue by a small pivot would push the
                    // entering variable out of bounds
                    let width = self.cols + 1;
                    self.data[r * width + self.cols] = 0.0;
                    self.pivot(r, c);
                }
            }
        }
    }

    fn phase_two(&mut self, cost: &[f64]) -> Result<()> {
        let mut full = vec![0.0; self.cols];
        for j in 0..self.nv {
            full[j] = cost[j];
            full[self.nv + j] = -cost[j];
        }
        self.run(&full, self.first_artificial)?;
        Ok(())
    }

    /// Recomputes the basic values from the untouched tableau `original`,
    /// removing drift accumulated over many pivots.
    fn resolve_basis(&self, original: &Tableau) -> Option<Vec<f64>> {
        let b = DenseMatrix::from_fn(self.rows, self.rows, |r, k| original.at(r, self.basis[k]));
        let rhs = Vector::from_fn(self.rows, |r, _| original.rhs(r));
        let values = b.lu().solve(&rhs)?;
        Some(self.primal_from(self.nv, |r| values[r]))
    }

    fn primal(&self, nv: usize) -> Vec<f64> {
        self.primal_from(nv, |r| self.rhs(r))
    }

    fn primal_from(&self, nv: usize, value: impl Fn(usize) -> f64) -> Vec<f64> {
        let mut x = vec![0.0; nv];
        for r in 0..self.rows {
            let b = self.basis[r];
            let v = value(r);
            if b < nv {
                x[b] += v;
            } else if b < 2 * nv {
                x[b - nv] -= v;
            }
        }
        x
    }
}
