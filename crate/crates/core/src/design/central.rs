use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{allowed_entries, check_convergence, snap_feedback, FeedbackMatrix, Method, NEG_TOL};
use crate::graph::Topology;
use crate::linalg::{
    eigen_decompose, nullspace_basis, solve_with_objective, spectral_radius_excluding_one,
    DenseMatrix, FeasibilityOutcome, LinearFeasibilityProblem, SpectralDecomposition, Vector,
    DEFAULT_RANK_TOL,
};
use crate::{Error, Result};

const SUPPORT_TOL: f64 = 1e-10;
const RANDOM_COMBINATIONS: usize = 64;
const MAX_SCALING_STEPS: usize = 60;
const MARGIN_STEPS: usize = 40;
const SUBSET_TOL: f64 = 1e-9;

fn square_identity(n: usize) -> DenseMatrix {
    DenseMatrix::identity(n, n)
}

/// Largest `alpha` keeping every diagonal entry of `(1 + alpha) W - alpha I`
/// nonnegative.
fn laplacian_diagonal_cap(w: &DenseMatrix) -> f64 {
    (0..w.nrows())
        .filter(|&i| w[(i, i)] < 1.0)
        .map(|i| w[(i, i)] / (1.0 - w[(i, i)]))
        .fold(f64::INFINITY, f64::min)
}

/// Half of `min{(1 - r)/(1 + r), min_i W_ii / (1 - W_ii)}`, `r` the second
/// largest eigenvalue modulus.
pub fn default_laplacian_alpha(t: &Topology) -> Result<f64> {
    let r = spectral_radius_excluding_one(t.weights())?;
    let bound = (1.0 - r) / (1.0 + r);
    Ok(0.5 * bound.min(laplacian_diagonal_cap(t.weights())))
}

/// `K = -alpha (I - W)`.
pub fn design_laplacian(t: &Topology, alpha: Option<f64>) -> Result<FeedbackMatrix> {
    let w = t.weights();
    let r = spectral_radius_excluding_one(w)?;
    let bound = ((1.0 - r) / (1.0 + r)).min(laplacian_diagonal_cap(w));
    let alpha = match alpha {
        Some(a) if a.is_finite() && a >= 0.0 => a,
        Some(a) => return Err(Error::Config(format!("alpha must be a nonnegative number, got {a}"))),
        None => 0.5 * bound,
    };
    let mut k = (w - square_identity(t.n())) * alpha;
    snap_feedback(w, &mut k);
    let fb = FeedbackMatrix::verified(t, k, Method::Laplacian)?;
    if !fb.verification.all_ok() {
        return Err(Error::AlphaTooLarge { alpha, bound });
    }
    Ok(fb)
}

/// `[1^T (x) I; I (x) pi^T]`, the `2n x n^2` map `vec(K) -> [K 1; K^T pi]`
/// with column-major `vec` (entry `(i, j)` at column `j n + i`).
pub fn kernel_constraint_matrix(n: usize, pi: &Vector) -> DenseMatrix {
    let mut m = DenseMatrix::zeros(2 * n, n * n);
    for j in 0..n {
        for i in 0..n {
            m[(i, j * n + i)] = 1.0;
            m[(n + j, j * n + i)] = pi[i];
        }
    }
    m
}

/// Rows `K 1 = 0`, `pi^T K = 0` restricted to the given entries.
fn consensus_rows(n: usize, pi: &Vector, entries: &[(usize, usize)]) -> DenseMatrix {
    let full = kernel_constraint_matrix(n, pi);
    DenseMatrix::from_fn(2 * n, entries.len(), |r, e| {
        let (i, j) = entries[e];
        full[(r, j * n + i)]
    })
}

fn entries_to_matrix(n: usize, entries: &[(usize, usize)], values: &[f64]) -> DenseMatrix {
    let mut k = DenseMatrix::zeros(n, n);
    for (&(i, j), &v) in entries.iter().zip(values) {
        k[(i, j)] = v;
    }
    k
}

fn support_count(v: &[f64]) -> usize {
    let top = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if top == 0.0 {
        return 0;
    }
    v.iter().filter(|x| x.abs() / top > SUPPORT_TOL).count()
}

/// Picks, among the plain basis sum and 64 seeded random combinations, the
/// vector with the most nonzero entries (first wins ties), scaled to unit
/// max-abs.
fn best_kernel_combination(basis: &DenseMatrix, seed: u64) -> Vec<f64> {
    let d = basis.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Vec<f64> = (basis * Vector::from_element(d, 1.0)).iter().copied().collect();
    let mut best_count = support_count(&best);
    for _ in 0..RANDOM_COMBINATIONS {
        let coeffs = Vector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
        let cand: Vec<f64> = (basis * coeffs).iter().copied().collect();
        let count = support_count(&cand);
        if count > best_count {
            best = cand;
            best_count = count;
        }
    }
    let top = best.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    best.iter().map(|x| x / top).collect()
}

/// Largest `eps <= 1` (capped further by nonnegativity of `W + eps D`) for
/// which `eps D` passes every convergence check: halving from the cap, then
/// bisecting, at most 60 evaluations in total.
fn scale_to_convergence(t: &Topology, direction: &DenseMatrix) -> Result<DenseMatrix> {
    let w = t.weights();
    let mut cap = 1.0f64;
    for (wv, dv) in w.iter().zip(direction.iter()) {
        if *dv < 0.0 {
            cap = cap.min(wv / -dv);
        }
    }
    let attempt = |eps: f64| -> Result<Option<DenseMatrix>> {
        let mut k = direction * eps;
        snap_feedback(w, &mut k);
        Ok(check_convergence(t, &k)?.all_ok().then_some(k))
    };
    if !(cap > 0.0) {
        return Err(Error::ScalingFailed);
    }
    let mut steps = 0;
    let mut eps = cap;
    let mut failed_above = None;
    let mut found = None;
    while steps < MAX_SCALING_STEPS {
        steps += 1;
        if let Some(k) = attempt(eps)? {
            found = Some((eps, k));
            break;
        }
        failed_above = Some(eps);
        eps *= 0.5;
    }
    let (mut lo, mut best) = found.ok_or(Error::ScalingFailed)?;
    if let Some(mut hi) = failed_above {
        while steps < MAX_SCALING_STEPS && hi - lo > 1e-9 * hi {
            steps += 1;
            let mid = 0.5 * (lo + hi);
            match attempt(mid)? {
                Some(k) => {
                    lo = mid;
                    best = k;
                }
                None => hi = mid,
            }
        }
    }
    Ok(best)
}

/// Kernel-space design: a nonzero `K` on the support of `W` with `K 1 = 0`
/// and `pi^T K = 0`, so the observer identifies `W + K` exactly but never
/// `W`.
pub fn design_kernel_pb(t: &Topology, seed: u64) -> Result<FeedbackMatrix> {
    let n = t.n();
    let pi = t.stationary()?;
    let entries = allowed_entries(t);
    let reduced = consensus_rows(n, &pi, &entries);
    let basis = nullspace_basis(&reduced, DEFAULT_RANK_TOL);
    if basis.ncols() == 0 {
        return Err(Error::Infeasible(format!(
            "constraint matrix has full column rank {} on {} allowed entries",
            entries.len(),
            entries.len()
        )));
    }
    let combo = best_kernel_combination(&basis, seed);
    let direction = entries_to_matrix(n, &entries, &combo);
    let k = scale_to_convergence(t, &direction)?;
    FeedbackMatrix::verified(t, k, Method::KernelPb)
}

/// Rows of `K v = 0` (or `= rhs`) over the allowed entries, one per node.
fn product_rows(n: usize, v: &Vector, entries: &[(usize, usize)]) -> DenseMatrix {
    DenseMatrix::from_fn(n, entries.len(), |r, e| {
        let (i, j) = entries[e];
        if i == r {
            v[j]
        } else {
            0.0
        }
    })
}

fn vstack(blocks: &[&DenseMatrix]) -> DenseMatrix {
    let cols = blocks[0].ncols();
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DenseMatrix::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        out.view_mut((at, 0), (b.nrows(), cols)).copy_from(b);
        at += b.nrows();
    }
    out
}

/// Design that makes `(W + K, C)` unobservable: `(W + K) v = 0` for some
/// unit `v` with `C v = 0`, so `v` lies in the kernel of the observability
/// matrix.
///
/// When `ker W` and `ker C` intersect, `v` is taken there and `K` comes from
/// the homogeneous system (`K v = 0`). Otherwise `v` is taken from
/// `ker C` (with `pi^T v = 0`, which any consensus-preserving `W + K` needs)
/// and `K` solves `K v = -W v` with `W + K >= 0`, minimising `||K||_1` under
/// a shrinking positivity margin.
pub fn design_unobservable(t: &Topology, c: &DenseMatrix, seed: u64) -> Result<FeedbackMatrix> {
    let n = t.n();
    if c.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "observation matrix has {} columns, network has {n} nodes",
            c.ncols()
        )));
    }
    if nullspace_basis(c, DEFAULT_RANK_TOL).ncols() == 0 {
        return Err(Error::Infeasible("ker(C) trivial".into()));
    }
    let w = t.weights();
    let pi = t.stationary()?;
    let entries = allowed_entries(t);
    let base = consensus_rows(n, &pi, &entries);

    let shared = nullspace_basis(&vstack(&[w, c]), DEFAULT_RANK_TOL);
    if shared.ncols() > 0 {
        let v: Vector = shared.column(0).into_owned();
        let system = vstack(&[&base, &product_rows(n, &v, &entries)]);
        let basis = nullspace_basis(&system, DEFAULT_RANK_TOL);
        if basis.ncols() > 0 {
            let combo = best_kernel_combination(&basis, seed);
            let direction = entries_to_matrix(n, &entries, &combo);
            let k = scale_to_convergence(t, &direction)?;
            let mut fb = FeedbackMatrix::verified(t, k, Method::Unobservable)?;
            fb.notes.push("hidden direction shared by ker(W) and ker(C)".into());
            return Ok(fb);
        }
    }

    let pi_row = DenseMatrix::from_fn(1, n, |_, j| pi[j]);
    let candidates = nullspace_basis(&vstack(&[c, &pi_row]), DEFAULT_RANK_TOL);
    if candidates.ncols() == 0 {
        return Err(Error::Infeasible("no v in ker(C) with pi^T v = 0".into()));
    }
    let v: Vector = candidates.column(0).into_owned();
    let wv = w * &v;
    let z = entries.len();
    let kv = product_rows(n, &v, &entries);
    let min_weight = w.iter().filter(|x| **x > 0.0).fold(f64::INFINITY, |m, x| m.min(*x));
    let mut any_feasible = false;
    for step in 0..MARGIN_STEPS {
        let margin = if step + 1 == MARGIN_STEPS { 0.0 } else { 0.5 * min_weight / f64::powi(2.0, step as i32) };
        // variables: K entries, then |K| bounds
        let mut lp = LinearFeasibilityProblem::new(2 * z);
        for r in 0..base.nrows() {
            let mut row = vec![0.0; 2 * z];
            row[..z].copy_from_slice(base.row(r).transpose().as_slice());
            lp.add_equality(&row, 0.0);
        }
        for r in 0..n {
            let mut row = vec![0.0; 2 * z];
            row[..z].copy_from_slice(kv.row(r).transpose().as_slice());
            lp.add_equality(&row, -wv[r]);
        }
        for (e, &(i, j)) in entries.iter().enumerate() {
            let mut row = vec![0.0; 2 * z];
            row[e] = -1.0;
            lp.add_inequality(&row, w[(i, j)] - margin);
            let mut up = vec![0.0; 2 * z];
            up[e] = 1.0;
            up[z + e] = -1.0;
            lp.add_inequality(&up, 0.0);
            let mut down = vec![0.0; 2 * z];
            down[e] = -1.0;
            down[z + e] = -1.0;
            lp.add_inequality(&down, 0.0);
        }
        let mut cost = vec![0.0; 2 * z];
        cost[z..].iter_mut().for_each(|c| *c = 1.0);
        match solve_with_objective(&lp, Some(&cost))? {
            FeasibilityOutcome::Infeasible => continue,
            FeasibilityOutcome::Feasible(x) => {
                any_feasible = true;
                let mut k = entries_to_matrix(n, &entries, &x[..z]);
                snap_feedback(w, &mut k);
                let mut fb = FeedbackMatrix::verified(t, k, Method::Unobservable)?;
                if fb.verification.all_ok() {
                    fb.notes.push(format!("hidden direction in ker(C) only; positivity margin {margin:e}"));
                    return Ok(fb);
                }
            }
        }
    }
    if any_feasible {
        Err(Error::ScalingFailed)
    } else {
        Err(Error::Infeasible("K v = -W v with W + K >= 0 has no solution".into()))
    }
}

/// A set of removable eigenmodes together with the zero-pattern matrix
/// whose rows are `lambda_i p_i(r) q_i(c)` over the zero entries `(r, c)`
/// of `W`.
#[derive(Debug, Clone)]
pub struct EigenmodeSelection {
    /// Eigenvalue indices in the order of [`SpectralDecomposition`].
    pub indices: Vec<usize>,
    pub h_matrix: DMatrix<Complex64>,
}

fn zero_pattern_matrix(t: &Topology, spec: &SpectralDecomposition) -> DMatrix<Complex64> {
    let n = t.n();
    let zeros: Vec<(usize, usize)> = (0..n)
        .flat_map(|r| (0..n).map(move |c| (r, c)))
        .filter(|&(r, c)| !t.has_edge(r, c))
        .collect();
    DMatrix::from_fn(zeros.len(), n, |l, i| {
        let (r, c) = zeros[l];
        spec.eigenvalues[i] * spec.right[(r, i)] * spec.left[(c, i)]
    })
}

/// Groups non-unit, nonzero eigenvalues so that conjugate pairs stay
/// together.
fn eigenmode_atoms(spec: &SpectralDecomposition) -> Vec<Vec<usize>> {
    let n = spec.len();
    let mut used = vec![false; n];
    let mut atoms = Vec::new();
    for i in 1..n {
        if used[i] || spec.eigenvalues[i].norm() < 1e-12 {
            continue;
        }
        used[i] = true;
        match spec.conjugate_partner(i, 1e-9) {
            Some(p) if !used[p] => {
                used[p] = true;
                let mut pair = vec![i, p];
                pair.sort_unstable();
                atoms.push(pair);
            }
            _ => atoms.push(vec![i]),
        }
    }
    atoms
}

/// Candidate index sets of size at least 2, by ascending cardinality and
/// lexicographically within a cardinality.
fn candidate_subsets(atoms: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let count = atoms.len();
    if count >= 31 {
        return out;
    }
    for mask in 1u32..(1u32 << count) {
        let mut set: Vec<usize> = (0..count)
            .filter(|a| mask & (1 << a) != 0)
            .flat_map(|a| atoms[a].iter().copied())
            .collect();
        if set.len() >= 2 {
            set.sort_unstable();
            out.push(set);
        }
    }
    out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    out
}

fn satisfies_zero_pattern(h: &DMatrix<Complex64>, set: &[usize]) -> bool {
    (0..h.nrows()).all(|l| set.iter().map(|&i| h[(l, i)]).sum::<Complex64>().norm() < SUBSET_TOL)
}

/// First eigenmode subset (in search order) whose removal keeps every zero
/// entry of `W` at zero.
pub fn select_eigenmodes(t: &Topology) -> Result<EigenmodeSelection> {
    let spec = eigen_decompose(t.weights())?;
    if !spec.diagonalizable {
        return Err(Error::NotDiagonalizable);
    }
    let h = zero_pattern_matrix(t, &spec);
    candidate_subsets(&eigenmode_atoms(&spec))
        .into_iter()
        .find(|s| satisfies_zero_pattern(&h, s))
        .map(|indices| EigenmodeSelection { indices, h_matrix: h })
        .ok_or(Error::NoValidSubset)
}

fn removal_feedback(t: &Topology, spec: &SpectralDecomposition, set: &[usize]) -> DenseMatrix {
    let n = t.n();
    let mut acc = DMatrix::<Complex64>::zeros(n, n);
    for &i in set {
        acc -= spec.projector(i) * spec.eigenvalues[i];
    }
    let mut k = acc.map(|z| z.re);
    for r in 0..n {
        for c in 0..n {
            if !t.has_edge(r, c) {
                k[(r, c)] = 0.0;
            }
        }
    }
    k
}

/// Adds a correction `dK` making `W + K_c + dK` nonnegative while keeping
/// the removed modes removed and the remaining spectrum untouched.
///
/// In the eigenbasis, `dK` may only populate the strictly upper (or, on the
/// second attempt, strictly lower) triangle among the retained modes; every
/// other coefficient `q_j^T dK p_k` is pinned to zero. The resulting
/// `W + K` is block triangular in that basis, so its eigenvalues are
/// `1`, zeros for the removed set, and the retained eigenvalues.
fn refine_nonnegative(
    t: &Topology,
    spec: &SpectralDecomposition,
    set: &[usize],
    k_c: &DenseMatrix,
) -> Result<Option<DenseMatrix>> {
    let n = t.n();
    let w = t.weights();
    let pi = t.stationary()?;
    let entries = allowed_entries(t);
    let z = entries.len();
    let retained: Vec<usize> = (1..n).filter(|i| !set.contains(i)).collect();
    let coefficient_row = |j: usize, k: Option<usize>| -> (Vec<f64>, Vec<f64>) {
        let mut re = vec![0.0; z];
        let mut im = vec![0.0; z];
        for (e, &(r, c)) in entries.iter().enumerate() {
            let pk = k.map_or(Complex64::new(1.0, 0.0), |k| spec.right[(c, k)]);
            let v = spec.left[(r, j)] * pk;
            re[e] = v.re;
            im[e] = v.im;
        }
        (re, im)
    };
    for upper in [true, false] {
        let mut lp = LinearFeasibilityProblem::new(z);
        let base = consensus_rows(n, &pi, &entries);
        for r in 0..base.nrows() {
            lp.add_equality(base.row(r).transpose().as_slice(), 0.0);
        }
        let add_complex = |lp: &mut LinearFeasibilityProblem, (re, im): (Vec<f64>, Vec<f64>)| {
            lp.add_equality(&re, 0.0);
            if im.iter().any(|x| *x != 0.0) {
                lp.add_equality(&im, 0.0);
            }
        };
        for &i in set {
            // dK p_i = 0: row r gets p_i(c) on its entries
            for r in 0..n {
                let mut re = vec![0.0; z];
                let mut im = vec![0.0; z];
                for (e, &(er, c)) in entries.iter().enumerate() {
                    if er == r {
                        re[e] = spec.right[(c, i)].re;
                        im[e] = spec.right[(c, i)].im;
                    }
                }
                add_complex(&mut lp, (re, im));
            }
            // q_i^T dK = 0: column c gets q_i(r) on its entries
            for c in 0..n {
                let mut re = vec![0.0; z];
                let mut im = vec![0.0; z];
                for (e, &(r, ec)) in entries.iter().enumerate() {
                    if ec == c {
                        re[e] = spec.left[(r, i)].re;
                        im[e] = spec.left[(r, i)].im;
                    }
                }
                add_complex(&mut lp, (re, im));
            }
        }
        for (a, &j) in retained.iter().enumerate() {
            for (b, &k) in retained.iter().enumerate() {
                let pinned = if upper { a >= b } else { a <= b };
                if pinned {
                    add_complex(&mut lp, coefficient_row(j, Some(k)));
                }
            }
        }
        for (e, &(r, c)) in entries.iter().enumerate() {
            let mut row = vec![0.0; z];
            row[e] = -1.0;
            lp.add_inequality(&row, w[(r, c)] + k_c[(r, c)]);
        }
        if let FeasibilityOutcome::Feasible(x) = solve_with_objective(&lp, None)? {
            return Ok(Some(entries_to_matrix(n, &entries, &x)));
        }
    }
    Ok(None)
}

/// Eigenmode-removal design: `K = -sum_{i in I_s} lambda_i p_i q_i^T`
/// (plus a spectrum-preserving nonnegativity correction when needed), so
/// every state after the first lies in a proper invariant subspace.
pub fn design_invariant_subspace(t: &Topology) -> Result<FeedbackMatrix> {
    let w = t.weights();
    let spec = eigen_decompose(w)?;
    if !spec.diagonalizable {
        return Err(Error::NotDiagonalizable);
    }
    let h = zero_pattern_matrix(t, &spec);
    let mut any_valid = false;
    for set in candidate_subsets(&eigenmode_atoms(&spec)) {
        if !satisfies_zero_pattern(&h, &set) {
            continue;
        }
        any_valid = true;
        let k_c = removal_feedback(t, &spec, &set);
        let min_entry = (w + &k_c).min();
        let (mut k, refined) = if min_entry >= -NEG_TOL {
            (k_c, false)
        } else {
            match refine_nonnegative(t, &spec, &set, &k_c)? {
                Some(dk) => (k_c + dk, true),
                None => continue,
            }
        };
        snap_feedback(w, &mut k);
        let mut fb = FeedbackMatrix::verified(t, k, Method::InvariantSubspace)?;
        if fb.verification.all_ok() {
            let labels: Vec<String> = set.iter().map(|i| (i + 1).to_string()).collect();
            fb.notes.push(format!("removed eigenmodes {}", labels.join(",")));
            if refined {
                fb.notes.push("nonnegativity correction applied".into());
            }
            return Ok(fb);
        }
    }
    Err(if any_valid { Error::RefinementInfeasible } else { Error::NoValidSubset })
}
