use nalgebra::{DMatrix, SVD};

use super::DenseMatrix;

/// Singular values in descending order. Empty for an empty matrix.
pub fn singular_values(a: &DenseMatrix) -> Vec<f64> {
    if a.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<f64> = SVD::new(a.clone(), false, false).singular_values.iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Number of singular values above `rel_tol * sigma_1`.
pub fn numerical_rank(a: &DenseMatrix, rel_tol: f64) -> usize {
    let s = singular_values(a);
    match s.first() {
        Some(&top) if top > 0.0 => s.iter().filter(|&&v| v > rel_tol * top).count(),
        _ => 0,
    }
}

/// Full SVD with a square `V`, obtained by zero-padding wide inputs.
/// Returns (singular values descending, V with matching column order).
fn full_right_svd(a: &DenseMatrix) -> (Vec<f64>, DenseMatrix) {
    let (r, c) = a.shape();
    let padded = if r < c {
        let mut p = DMatrix::zeros(c, c);
        p.view_mut((0, 0), (r, c)).copy_from(a);
        p
    } else {
        a.clone()
    };
    let svd = SVD::new(padded, false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let s = order.iter().map(|&i| svd.singular_values[i]).collect();
    let v = DMatrix::from_fn(c, order.len(), |row, k| v_t[(order[k], row)]);
    (s, v)
}

/// Orthonormal basis of `ker(a)` as columns; `cols(a) - rank(a)` columns.
pub fn nullspace_basis(a: &DenseMatrix, rel_tol: f64) -> DenseMatrix {
    let c = a.ncols();
    if a.nrows() == 0 || a.iter().all(|v| *v == 0.0) {
        return DMatrix::identity(c, c);
    }
    let (s, v) = full_right_svd(a);
    let top = s[0];
    let rank = s.iter().filter(|&&x| x > rel_tol * top).count();
    v.columns(rank, c - rank).into_owned()
}

/// Moore-Penrose pseudo-inverse with a relative singular-value cutoff.
pub fn pseudo_inverse(a: &DenseMatrix, rel_tol: f64) -> DenseMatrix {
    let (r, c) = a.shape();
    if a.iter().all(|v| *v == 0.0) {
        return DMatrix::zeros(c, r);
    }
    let svd = SVD::new(a.clone(), true, true);
    let top = svd.singular_values.max();
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let mut out = DMatrix::zeros(c, r);
    for (k, &sigma) in svd.singular_values.iter().enumerate() {
        if sigma > rel_tol * top {
            let vk = v_t.row(k).transpose();
            let uk = u.column(k);
            out += (vk * uk.transpose()) / sigma;
        }
    }
    out
}
