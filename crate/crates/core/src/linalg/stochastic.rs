use nalgebra::{DMatrix, DVector, SVD};
use num_complex::Complex64;

use super::{eigen_decompose, eigenvalues, numerical_rank, DenseMatrix, Vector, DEFAULT_RANK_TOL};
use crate::{Error, Result};

const ROW_SUM_TOL: f64 = 1e-9;

/// Checks nonnegativity and unit row sums (within `1e-9`).
pub fn is_row_stochastic(w: &DenseMatrix) -> Result<()> {
    if !w.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "expected a square matrix, got {}x{}",
            w.nrows(),
            w.ncols()
        )));
    }
    for i in 0..w.nrows() {
        for j in 0..w.ncols() {
            let v = w[(i, j)];
            if !v.is_finite() {
                return Err(Error::NonFinite { row: i, col: j });
            }
            if v < 0.0 {
                return Err(Error::NegativeEntry { row: i, col: j, value: v });
            }
        }
        let sum: f64 = w.row(i).sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::NotStochastic { row: i, sum });
        }
    }
    Ok(())
}

fn unit_eigenvalue_is_simple(w: &DenseMatrix) -> bool {
    let n = w.nrows();
    let a = DMatrix::identity(n, n) - w;
    n == 1 || numerical_rank(&a, DEFAULT_RANK_TOL) == n - 1
}

/// Stationary distribution `pi` with `pi^T W = pi^T`, `pi^T 1 = 1`.
pub fn left_dominant_vector(w: &DenseMatrix) -> Result<Vector> {
    is_row_stochastic(w)?;
    let n = w.nrows();
    if n == 1 {
        return Ok(DVector::from_element(1, 1.0));
    }
    if !unit_eigenvalue_is_simple(w) {
        return Err(Error::NoUniqueStationary);
    }
    // (I - W)^T pi = 0 has one redundant row; swap it for the normalisation
    let mut system = (DMatrix::identity(n, n) - w).transpose();
    system.row_mut(n - 1).fill(1.0);
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    let lu = system.clone().lu();
    let mut pi = lu
        .solve(&rhs)
        .ok_or_else(|| Error::NumericalFailure("singular stationary system".into()))?;
    for _ in 0..2 {
        let residual = &rhs - &system * &pi;
        if let Some(corr) = lu.solve(&residual) {
            pi += corr;
        }
    }
    for v in pi.iter_mut() {
        if *v < 0.0 && *v > -1e-12 {
            *v = 0.0;
        }
    }
    let total = pi.sum();
    pi /= total;
    if pi.iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(Error::NumericalFailure("stationary vector has negative entries".into()));
    }
    Ok(pi)
}

/// `max |lambda_i|` over all eigenvalues but the unit one.
pub fn spectral_radius_excluding_one(w: &DenseMatrix) -> Result<f64> {
    is_row_stochastic(w)?;
    if w.nrows() == 1 {
        return Ok(0.0);
    }
    let vals = eigenvalues(w)?;
    let unit = closest_to_one(&vals);
    let r = vals
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != unit)
        .map(|(_, v)| v.norm())
        .fold(0.0, f64::max);
    if r >= 1.0 - 1e-9 {
        return Err(Error::NotContractive(r));
    }
    Ok(r)
}

pub(crate) fn closest_to_one(vals: &[Complex64]) -> usize {
    let one = Complex64::new(1.0, 0.0);
    (0..vals.len())
        .min_by(|&a, &b| (vals[a] - one).norm().total_cmp(&(vals[b] - one).norm()))
        .unwrap_or(0)
}

fn group_identities_hold(a: &DenseMatrix, g: &DenseMatrix, tol: f64) -> bool {
    let scale = a.norm().max(1.0) * g.norm().max(1.0);
    (a * g * a - a).norm() <= tol * scale
        && (g * a * g - g).norm() <= tol * scale
        && (a * g - g * a).norm() <= tol * scale
}

/// Group inverse of `I - W` for row-stochastic `W` with a simple unit
/// eigenvalue.
///
/// Uses `sum_{lambda_i != 1} (1 - lambda_i)^{-1} p_i q_i^T` when `W` is
/// diagonalizable and a full-rank factorisation `A = F G`,
/// `A# = F (G F)^{-2} G` otherwise (or when the spectral route loses
/// accuracy).
pub fn group_inverse_i_minus(w: &DenseMatrix) -> Result<DenseMatrix> {
    is_row_stochastic(w)?;
    let n = w.nrows();
    let a = DMatrix::identity(n, n) - w;
    if n == 1 {
        return Ok(DMatrix::zeros(1, 1));
    }
    if !unit_eigenvalue_is_simple(w) {
        return Err(Error::NotComputable("unit eigenvalue of W is not simple".into()));
    }
    let spec = eigen_decompose(w)?;
    if spec.diagonalizable {
        let unit = closest_to_one(&spec.eigenvalues);
        let mut acc = DMatrix::<Complex64>::zeros(n, n);
        for i in (0..n).filter(|&i| i != unit) {
            acc += spec.projector(i) / (Complex64::new(1.0, 0.0) - spec.eigenvalues[i]);
        }
        let g = acc.map(|z| z.re);
        if group_identities_hold(&a, &g, 1e-10) {
            return Ok(g);
        }
    }
    let g = full_rank_group_inverse(&a)?;
    if !group_identities_hold(&a, &g, 1e-8) {
        return Err(Error::NotComputable("group inverse identities fail".into()));
    }
    Ok(g)
}

fn full_rank_group_inverse(a: &DenseMatrix) -> Result<DenseMatrix> {
    let svd = SVD::new(a.clone(), true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let top = svd.singular_values.max();
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| svd.singular_values[k] > DEFAULT_RANK_TOL * top)
        .collect();
    let r = keep.len();
    let n = a.nrows();
    let f = DMatrix::from_fn(n, r, |i, c| u[(i, keep[c])] * svd.singular_values[keep[c]]);
    let g = DMatrix::from_fn(r, n, |c, j| v_t[(keep[c], j)]);
    let gf = &g * &f;
    let inv = gf
        .try_inverse()
        .ok_or_else(|| Error::NotComputable("core of the factorisation is singular".into()))?;
    Ok(f * (&inv * &inv) * g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::random_topology;

    fn power_iteration_pi(w: &DenseMatrix) -> Vector {
        let n = w.nrows();
        let mut v = DVector::from_element(n, 1.0 / n as f64);
        let wt = w.transpose();
        for _ in 0..20_000 {
            v = &wt * &v;
        }
        let s = v.sum();
        v / s
    }

    #[test]
    fn symmetric_pi() {
        let w = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5]);
        let pi = left_dominant_vector(&w).unwrap();
        assert!((pi[0] - 0.5).abs() < 1e-15 && (pi[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn absorbing_node_pi() {
        let w = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 0.5]);
        let pi = left_dominant_vector(&w).unwrap();
        assert!((pi[0] - 1.0).abs() < 1e-15 && pi[1].abs() < 1e-15);
    }

    #[test]
    fn random_pi_matches_power_iteration() {
        let t = random_topology(8, 0.4, 1).unwrap();
        let pi = left_dominant_vector(t.weights()).unwrap();
        let oracle = power_iteration_pi(t.weights());
        assert!((&pi - &oracle).amax() < 1e-10);
        let residual = (pi.transpose() * t.weights() - pi.transpose()).amax();
        assert!(residual < 1e-12);
    }

    #[test]
    fn reducible_with_two_sinks_has_no_unique_pi() {
        let w = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.3, 0.3, 0.4]);
        assert_eq!(left_dominant_vector(&w), Err(Error::NoUniqueStationary));
    }

    #[test]
    fn not_stochastic_is_rejected() {
        let w = DMatrix::from_row_slice(2, 2, &[0.5, 0.6, 0.5, 0.5]);
        assert!(matches!(left_dominant_vector(&w), Err(Error::NotStochastic { .. })));
    }

    #[test]
    fn radius_examples() {
        let avg = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5]);
        assert!(spectral_radius_excluding_one(&avg).unwrap() < 1e-14);
        let lazy = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.1, 0.9]);
        assert!((spectral_radius_excluding_one(&lazy).unwrap() - 0.8).abs() < 1e-12);
        let t = random_topology(8, 0.4, 1).unwrap();
        assert!(spectral_radius_excluding_one(t.weights()).unwrap() < 1.0);
    }

    #[test]
    fn periodic_matrix_is_not_contractive() {
        let flip = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!(matches!(
            spectral_radius_excluding_one(&flip),
            Err(Error::NotContractive(_))
        ));
    }

    #[test]
    fn group_inverse_trivial() {
        let g = group_inverse_i_minus(&DMatrix::from_element(1, 1, 1.0)).unwrap();
        assert_eq!(g[(0, 0)], 0.0);
    }

    #[test]
    fn group_inverse_identities() {
        let avg = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5]);
        let a = DMatrix::identity(2, 2) - &avg;
        let g = group_inverse_i_minus(&avg).unwrap();
        assert!((&a * &g * &a - &a).norm() < 1e-14);
        assert!((&g * &a * &g - &g).norm() < 1e-14);
        assert!((&a * &g - &g * &a).norm() < 1e-14);
    }

    #[test]
    fn group_inverse_matches_fundamental_matrix_oracle() {
        // A# = (I - W + 1 pi^T)^{-1} - 1 pi^T for an irreducible chain
        let t = random_topology(8, 0.4, 1).unwrap();
        let w = t.weights();
        let pi = left_dominant_vector(w).unwrap();
        let ones = DVector::from_element(8, 1.0);
        let z = (DMatrix::identity(8, 8) - w + &ones * pi.transpose())
            .try_inverse()
            .unwrap();
        let oracle = z - &ones * pi.transpose();
        let g = group_inverse_i_minus(w).unwrap();
        assert!((&g - &oracle).norm() < 1e-9);
        let a = DMatrix::identity(8, 8) - w;
        assert!((&a * &g * &a - &a).norm() < 1e-8);
    }

    #[test]
    fn factorisation_route_agrees_with_spectral() {
        let t = random_topology(6, 0.5, 3).unwrap();
        let a = DMatrix::identity(6, 6) - t.weights();
        let spectral = group_inverse_i_minus(t.weights()).unwrap();
        let factored = full_rank_group_inverse(&a).unwrap();
        assert!((spectral - factored).norm() < 1e-9);
    }
}
