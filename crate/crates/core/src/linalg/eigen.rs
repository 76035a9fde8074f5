use nalgebra::{DMatrix, Schur, SVD};
use num_complex::Complex64;

use super::DenseMatrix;
use crate::{Error, Result};

type CMatrix = DMatrix<Complex64>;

const SCHUR_EPS: f64 = 1e-15;
const SCHUR_MAX_ITER: usize = 100_000;
const RECONSTRUCTION_TOL: f64 = 1e-8;

/// Eigenvalues with biorthogonal right/left eigenvectors.
///
/// `right` holds the columns `p_i`, `left` the columns `q_i`, normalised so
/// that `q_i^T p_j = delta_ij` (plain transpose, no conjugation). For a
/// row-stochastic input the leading pair is `(1, all-ones, pi)`.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<Complex64>,
    pub right: CMatrix,
    pub left: CMatrix,
    pub diagonalizable: bool,
}

impl SpectralDecomposition {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Rank-one spectral projector `p_i q_i^T`.
    pub fn projector(&self, i: usize) -> CMatrix {
        self.right.column(i) * self.left.column(i).transpose()
    }

    /// `sum_i lambda_i p_i q_i^T`, real part.
    pub fn reconstruct(&self) -> DenseMatrix {
        let n = self.len();
        let mut acc = CMatrix::zeros(n, n);
        for i in 0..n {
            acc += self.projector(i) * self.eigenvalues[i];
        }
        acc.map(|z| z.re)
    }

    /// Index of the complex-conjugate partner of eigenvalue `i`, if it has one.
    pub fn conjugate_partner(&self, i: usize, tol: f64) -> Option<usize> {
        let lam = self.eigenvalues[i];
        if lam.im.abs() <= tol {
            return None;
        }
        (0..self.len())
            .filter(|&j| j != i)
            .min_by(|&a, &b| {
                let da = (self.eigenvalues[a] - lam.conj()).norm();
                let db = (self.eigenvalues[b] - lam.conj()).norm();
                da.total_cmp(&db)
            })
            .filter(|&j| (self.eigenvalues[j] - lam.conj()).norm() <= tol.max(1e-9))
    }

    /// `max_{i,j} |q_i^T p_j - delta_ij|`.
    pub fn biorthogonality_error(&self) -> f64 {
        let g = self.left.transpose() * &self.right;
        let n = self.len();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[(i, j)] - Complex64::new(target, 0.0)).norm());
            }
        }
        worst
    }
}

fn sort_spectrum(vals: &mut [Complex64]) {
    vals.sort_by(|a, b| {
        b.norm()
            .total_cmp(&a.norm())
            .then(b.re.total_cmp(&a.re))
            .then(b.im.total_cmp(&a.im))
    });
    // a unit eigenvalue goes first even when other eigenvalues share its modulus
    if let Some(k) = vals
        .iter()
        .position(|v| (*v - Complex64::new(1.0, 0.0)).norm() < 1e-8)
    {
        vals[..=k].rotate_right(1);
    }
}

/// Eigenvalues of a real square matrix, sorted by descending modulus with a
/// unit eigenvalue (if any) first.
pub fn eigenvalues(a: &DenseMatrix) -> Result<Vec<Complex64>> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "eigenvalues of a {}x{} matrix",
            a.nrows(),
            a.ncols()
        )));
    }
    let schur = Schur::try_new(a.clone(), SCHUR_EPS, SCHUR_MAX_ITER).ok_or(Error::NonConvergence)?;
    let mut vals: Vec<Complex64> = schur.complex_eigenvalues().iter().copied().collect();
    if vals.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::NonConvergence);
    }
    sort_spectrum(&mut vals);
    Ok(vals)
}

/// Right singular vectors for the `k` smallest singular values of `m`, plus
/// the largest of those `k` singular values.
fn smallest_right_vectors(m: CMatrix, k: usize) -> (CMatrix, f64) {
    let n = m.ncols();
    let svd = SVD::new(m, false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let picked = &order[..k];
    let worst = picked.iter().map(|&i| svd.singular_values[i]).fold(0.0, f64::max);
    let v = CMatrix::from_fn(n, k, |r, c| v_t[(picked[c], r)].conj());
    (v, worst)
}

fn fix_phase(v: &mut CMatrix, col: usize) {
    let (mut best, mut idx) = (0.0, 0);
    for r in 0..v.nrows() {
        let m = v[(r, col)].norm();
        if m > best + 1e-12 {
            best = m;
            idx = r;
        }
    }
    if best == 0.0 {
        return;
    }
    let rot = v[(idx, col)].conj() / best;
    for r in 0..v.nrows() {
        v[(r, col)] *= rot;
    }
}

/// Eigen-decomposition `A = sum_i lambda_i p_i q_i^T`.
///
/// Eigenvalues come from a real Schur form; eigenvectors are the right
/// singular vectors of `A - lambda I` for each cluster of (numerically)
/// equal eigenvalues, and the left vectors are the rows of the inverse of
/// the right-vector matrix. Conjugate eigenvalues get conjugate vectors so
/// real combinations stay real. `diagonalizable` is cleared when a cluster
/// lacks a full eigenvector basis or the reconstruction misses `1e-8`
/// relative Frobenius accuracy.
pub fn eigen_decompose(a: &DenseMatrix) -> Result<SpectralDecomposition> {
    let n = a.nrows();
    let vals = eigenvalues(a)?;
    let scale = a.norm().max(1.0);
    let cluster_tol = 1e-7 * scale;
    let defect_tol = 1e-6 * scale;

    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for (i, v) in vals.iter().enumerate() {
        match clusters
            .iter_mut()
            .find(|c| (vals[c[0]] - *v).norm() < cluster_tol)
        {
            Some(c) => c.push(i),
            None => clusters.push(vec![i]),
        }
    }

    let ac: CMatrix = a.map(|x| Complex64::new(x, 0.0));
    let mut lambda = vec![Complex64::new(0.0, 0.0); n];
    let mut right = CMatrix::zeros(n, n);
    let mut diagonalizable = true;
    // per cluster: (mean eigenvalue, basis) for pairing conjugates
    let mut solved: Vec<(Complex64, CMatrix)> = Vec::new();

    for members in &clusters {
        let k = members.len();
        let mean = members.iter().map(|&i| vals[i]).sum::<Complex64>() / k as f64;
        let partner = if mean.im < -cluster_tol {
            solved
                .iter()
                .find(|(mu, b)| b.ncols() == k && (*mu - mean.conj()).norm() < 10.0 * cluster_tol)
                .map(|(mu, b)| (mu.conj(), b.map(|z| z.conj())))
        } else {
            None
        };
        let (mu, basis) = match partner {
            Some(found) => found,
            None => {
                let center = if mean.im.abs() <= cluster_tol {
                    Complex64::new(mean.re, 0.0)
                } else {
                    mean
                };
                let shifted = &ac - CMatrix::identity(n, n) * center;
                let (mut basis, worst) = smallest_right_vectors(shifted, k);
                if worst > defect_tol {
                    diagonalizable = false;
                }
                if center.im == 0.0 && k == 1 {
                    fix_phase(&mut basis, 0);
                    basis.iter_mut().for_each(|z| *z = Complex64::new(z.re, 0.0));
                    let nrm = basis.norm();
                    basis /= Complex64::new(nrm, 0.0);
                } else if k == 1 {
                    fix_phase(&mut basis, 0);
                }
                // Rayleigh quotient on the cluster subspace
                let rq = (basis.adjoint() * &ac * &basis).trace() / k as f64;
                let mu = if center.im == 0.0 { Complex64::new(rq.re, 0.0) } else { rq };
                (mu, basis)
            }
        };
        for (slot, &i) in members.iter().enumerate() {
            lambda[i] = mu;
            right.set_column(i, &basis.column(slot));
        }
        solved.push((mu, basis));
    }

    // row-stochastic input: leading pair is (1, all-ones)
    let stochastic = a.is_square()
        && a.row_iter().all(|r| (r.sum() - 1.0).abs() < 1e-9)
        && a.iter().all(|&x| x >= 0.0);
    if stochastic && n > 0 && (lambda[0] - Complex64::new(1.0, 0.0)).norm() < 1e-8 {
        let unit_multiplicity = clusters.iter().find(|c| c.contains(&0)).map_or(1, |c| c.len());
        if unit_multiplicity == 1 {
            lambda[0] = Complex64::new(1.0, 0.0);
            right.set_column(0, &CMatrix::from_element(n, 1, Complex64::new(1.0, 0.0)).column(0));
        }
    }

    let inverse = match right.clone().try_inverse() {
        Some(inv) if inv.iter().all(|z| z.re.is_finite() && z.im.is_finite()) => inv,
        _ => {
            diagonalizable = false;
            complex_pinv(&right)
        }
    };
    let left = inverse.transpose();

    let decomposition = SpectralDecomposition {
        eigenvalues: lambda,
        right,
        left,
        diagonalizable,
    };
    if decomposition.diagonalizable {
        let err = (a - decomposition.reconstruct()).norm();
        if err > RECONSTRUCTION_TOL * a.norm().max(f64::MIN_POSITIVE) {
            return Ok(SpectralDecomposition {
                diagonalizable: false,
                ..decomposition
            });
        }
    }
    Ok(decomposition)
}

fn complex_pinv(m: &CMatrix) -> CMatrix {
    let svd = SVD::new(m.clone(), true, true);
    let top = svd.singular_values.max();
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let mut out = CMatrix::zeros(m.ncols(), m.nrows());
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > 1e-12 * top {
            out += v_t.row(k).adjoint() * u.column(k).adjoint() / Complex64::new(s, 0.0);
        }
    }
    out
}

/// Largest distance in a greedy nearest-neighbour matching of two eigenvalue
/// multisets; infinite when the sizes differ.
pub fn spectrum_mismatch(a: &[Complex64], b: &[Complex64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let mut used = vec![false; b.len()];
    let mut worst = 0.0f64;
    for x in a {
        let (k, d) = b
            .iter()
            .enumerate()
            .filter(|(k, _)| !used[*k])
            .map(|(k, y)| (k, (x - y).norm()))
            .min_by(|p, q| p.1.total_cmp(&q.1))
            .expect("sizes match");
        used[k] = true;
        worst = worst.max(d);
    }
    worst
}
