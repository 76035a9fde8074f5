//! Dense numeric kernels shared by every design and estimator.
//!
//! Matrices are `nalgebra::DMatrix<f64>`; the decompositions here add the
//! pieces nalgebra does not provide directly (eigenvectors of nonsymmetric
//! matrices, full nullspaces of wide matrices, a feasibility LP).

mod eigen;
mod simplex;
mod stochastic;
mod svd;

pub use eigen::{eigen_decompose, eigenvalues, spectrum_mismatch, SpectralDecomposition};
pub use simplex::{
    solve_feasibility, solve_with_objective, FeasibilityOutcome, LinearFeasibilityProblem,
};
pub use stochastic::{
    group_inverse_i_minus, is_row_stochastic, left_dominant_vector, spectral_radius_excluding_one,
};
pub(crate) use stochastic::closest_to_one;
pub use svd::{nullspace_basis, numerical_rank, pseudo_inverse, singular_values};

use nalgebra::{DMatrix, DVector};

pub type DenseMatrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative singular-value cutoff used for every rank decision.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

/// Maximum absolute row sum.
pub fn inf_norm(a: &DenseMatrix) -> f64 {
    a.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn max_abs(a: &DenseMatrix) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Builds a dense matrix from row vectors; all rows must have equal length.
pub fn from_rows(rows: &[Vec<f64>]) -> crate::Result<DenseMatrix> {
    let r = rows.len();
    if r == 0 {
        return Err(crate::Error::DimensionMismatch("matrix has no rows".into()));
    }
    let c = rows[0].len();
    if c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(crate::Error::DimensionMismatch("ragged or empty rows".into()));
    }
    Ok(DenseMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

pub fn to_rows(a: &DenseMatrix) -> Vec<Vec<f64>> {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[(i, j)]).collect())
        .collect()
}
