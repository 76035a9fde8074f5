//! The observer: estimators of the interaction matrix from trajectories or
//! outputs, and the privacy/performance scores of an estimate.

use serde::Serialize;

use crate::dynamics::{build_hankel, ObservationRecord, Trajectory};
use crate::format::Num;
use crate::graph::Topology;
use crate::linalg::{
    group_inverse_i_minus, inf_norm, left_dominant_vector, numerical_rank, pseudo_inverse,
    DenseMatrix, DEFAULT_RANK_TOL,
};
use crate::{Error, Result};

/// `gamma` reported when the off-diagonal correlation is not positive and
/// `er2` is the limit `gamma -> 0+`.
pub const GAMMA_CLAMP: f64 = f64::MIN_POSITIVE;

const ZERO_ENTRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateMode {
    /// The estimate targets the interaction matrix itself.
    Direct,
    /// The estimate is only defined up to a similarity transformation.
    SimilarityClass,
}

#[derive(Debug, Clone)]
pub struct IdentificationResult {
    pub estimate: DenseMatrix,
    pub mode: EstimateMode,
    pub data_rank: usize,
    /// `data_rank < n`
    pub rank_deficient: bool,
    /// The lag estimator regularised a singular lag-1 covariance.
    pub ridge: bool,
}

fn require_horizon(needed: usize, have: usize) -> Result<()> {
    if have < needed {
        return Err(Error::HorizonTooShort { needed, have });
    }
    Ok(())
}

/// Least squares `X_{1:T} X_{0:T-1}^+` with the SVD pseudo-inverse.
pub fn ols_estimate(traj: &Trajectory) -> Result<IdentificationResult> {
    ols_estimate_multi(std::slice::from_ref(traj))
}

/// Least squares over the transitions of several trajectories of the same
/// system, e.g. one experiment per initial condition.
pub fn ols_estimate_multi(trajs: &[Trajectory]) -> Result<IdentificationResult> {
    let first = trajs
        .first()
        .ok_or_else(|| Error::DimensionMismatch("no trajectories supplied".into()))?;
    let n = first.n();
    if trajs.iter().any(|t| t.n() != n) {
        return Err(Error::DimensionMismatch("trajectories of different dimensions".into()));
    }
    let total: usize = trajs.iter().map(|t| t.horizon()).sum();
    let needed = if trajs.len() == 1 { n } else { 1 };
    require_horizon(needed, total)?;
    let mut past = DenseMatrix::zeros(n, total);
    let mut next = DenseMatrix::zeros(n, total);
    let mut col = 0;
    for t in trajs {
        let h = t.horizon();
        past.view_mut((0, col), (n, h)).copy_from(&t.columns(0, h - 1));
        next.view_mut((0, col), (n, h)).copy_from(&t.columns(1, h));
        col += h;
    }
    let data_rank = numerical_rank(&past, DEFAULT_RANK_TOL);
    let estimate = next * pseudo_inverse(&past, DEFAULT_RANK_TOL);
    Ok(IdentificationResult {
        estimate,
        mode: EstimateMode::Direct,
        data_rank,
        rank_deficient: data_rank < n,
        ridge: false,
    })
}

/// Shift-invariance identification from the block Hankel matrix of the
/// outputs. The past/future halves `Y-`, `Y+` share the factor `Q_o`; the
/// rank-`n` SVD of `Y-` gives `Q_o ~ U L^{1/2}` and `X ~ L^{1/2} V^T`, and
/// `Q_W = Q_o^+ Y+ X^+`.
///
/// When `Y-` has numerical rank `r < n` the estimate is the `r x r`
/// truncation and `rank_deficient` is set.
pub fn subspace_identify(obs: &ObservationRecord, n: usize) -> Result<IdentificationResult> {
    let m = obs.m();
    require_horizon(n * m + n - 1, obs.outputs.len())?;
    let hankel = build_hankel(obs, n)?;
    let cols = hankel.ncols();
    if cols < 2 {
        return Err(Error::HorizonTooShort { needed: n + 1, have: obs.outputs.len() });
    }
    let past = hankel.columns(0, cols - 1).into_owned();
    let future = hankel.columns(1, cols - 1).into_owned();
    let svd = past.clone().svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let data_rank = numerical_rank(&past, DEFAULT_RANK_TOL);
    let r = data_rank.min(n);
    if r == 0 {
        return Ok(IdentificationResult {
            estimate: DenseMatrix::zeros(0, 0),
            mode: EstimateMode::SimilarityClass,
            data_rank,
            rank_deficient: true,
            ridge: false,
        });
    }
    // Q_o^+ = L^{-1/2} U^T and X^+ = V L^{-1/2} on the kept components
    let q_pinv = DenseMatrix::from_fn(r, past.nrows(), |k, i| {
        u[(i, order[k])] / svd.singular_values[order[k]].sqrt()
    });
    let x_pinv = DenseMatrix::from_fn(past.ncols(), r, |j, k| {
        v_t[(order[k], j)] / svd.singular_values[order[k]].sqrt()
    });
    Ok(IdentificationResult {
        estimate: q_pinv * future * x_pinv,
        mode: EstimateMode::SimilarityClass,
        data_rank,
        rank_deficient: data_rank < n,
        ridge: false,
    })
}

/// `Gamma(2) Gamma(1)^{-1}` with the lag covariances
/// `Gamma(k) = 1/(T-k) sum_{t=k+1..T} x_t x_{t-k}^T`.
///
/// A numerically singular `Gamma(1)` is regularised by `1e-10 ||Gamma(1)||_F I`
/// and flagged.
pub fn lag_estimate(traj: &Trajectory) -> Result<IdentificationResult> {
    let n = traj.n();
    let horizon = traj.horizon();
    require_horizon(n + 3, horizon)?;
    let mut lag1 = DenseMatrix::zeros(n, n);
    let mut lag2 = DenseMatrix::zeros(n, n);
    for t in 2..=horizon {
        lag1 += &traj.states[t] * traj.states[t - 1].transpose();
    }
    for t in 3..=horizon {
        lag2 += &traj.states[t] * traj.states[t - 2].transpose();
    }
    lag1 /= (horizon - 1) as f64;
    lag2 /= (horizon - 2) as f64;
    let data_rank = numerical_rank(&lag1, DEFAULT_RANK_TOL);
    let ridge = data_rank < n;
    if ridge {
        let lambda = 1e-10 * lag1.norm();
        for i in 0..n {
            lag1[(i, i)] += lambda;
        }
    }
    let inverse = lag1
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::NumericalFailure("lag-1 covariance is singular after ridge".into()))?;
    Ok(IdentificationResult {
        estimate: lag2 * inverse,
        mode: EstimateMode::Direct,
        data_rank,
        rank_deficient: ridge,
        ridge,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrivacyScore {
    /// `||W_hat - W||_F / ||W||_F`; NaN for similarity-class estimates.
    pub er1: Num,
    /// Off-diagonal error after the best positive rescaling.
    pub er2: Num,
    pub gamma_star: Num,
    /// `sup_t ||x_t - x*_t||_2`
    pub state_dev_sup: Num,
    /// `||x_T - x*_T||_2` at the last common time.
    pub state_dev_final: Num,
    /// `||pi - pi~||_1`
    pub pi_dev: Num,
    /// Fraction of nonzero entries of `W + K`.
    pub sparsity_rate: Num,
    /// `||(I - W)#||_inf ||K||_inf`
    pub pi_dev_bound: Num,
    pub bound_holds: bool,
}

fn off_diagonal(a: &DenseMatrix) -> DenseMatrix {
    DenseMatrix::from_fn(a.nrows(), a.ncols(), |i, j| if i == j { 0.0 } else { a[(i, j)] })
}

/// Returns `(er2, gamma*)` for the off-diagonal parts of an estimate and the
/// truth.
pub fn scaled_offdiagonal_error(estimate: &DenseMatrix, truth: &DenseMatrix) -> (f64, f64) {
    let est = off_diagonal(estimate);
    let tru = off_diagonal(truth);
    let denom = tru.norm();
    if denom == 0.0 {
        return (f64::NAN, f64::NAN);
    }
    let corr = est.dot(&tru);
    let est_sq = est.norm_squared();
    if corr <= 0.0 || est_sq == 0.0 {
        return (1.0, GAMMA_CLAMP);
    }
    let gamma = corr / est_sq;
    ((est * gamma - &tru).norm() / denom, gamma)
}

/// Fraction of entries of `a` with modulus above `1e-12`.
pub fn support_fraction(a: &DenseMatrix) -> f64 {
    let total = a.len();
    if total == 0 {
        return 0.0;
    }
    a.iter().filter(|v| v.abs() > ZERO_ENTRY_TOL).count() as f64 / total as f64
}

/// Scores an estimate against the truth `W`, the observed trajectory
/// against the unmodified one, and the feedback `K` itself.
pub fn score(
    estimate: &IdentificationResult,
    truth: &Topology,
    traj: &Trajectory,
    baseline: &Trajectory,
    k: &DenseMatrix,
) -> Result<PrivacyScore> {
    let w = truth.weights();
    let n = truth.n();
    if k.shape() != (n, n) || traj.n() != n || baseline.n() != n {
        return Err(Error::DimensionMismatch("score inputs disagree with the network size".into()));
    }
    let (er1, er2, gamma) = match estimate.mode {
        EstimateMode::Direct if estimate.estimate.shape() == (n, n) => {
            let er1 = (&estimate.estimate - w).norm() / w.norm();
            let (er2, gamma) = scaled_offdiagonal_error(&estimate.estimate, w);
            (er1, er2, gamma)
        }
        _ => (f64::NAN, f64::NAN, f64::NAN),
    };
    let common = traj.horizon().min(baseline.horizon());
    let state_dev_sup = traj.truncated(common).sup_deviation(&baseline.truncated(common));
    let state_dev_final = (&traj.states[common] - &baseline.states[common]).norm();
    let modified = w + k;
    let pi = truth.stationary()?;
    let pi_mod = left_dominant_vector(&modified)?;
    let pi_dev = (&pi - &pi_mod).lp_norm(1);
    let bound = inf_norm(&group_inverse_i_minus(w)?) * inf_norm(k);
    Ok(PrivacyScore {
        er1: Num(er1),
        er2: Num(er2),
        gamma_star: Num(gamma),
        state_dev_sup: Num(state_dev_sup),
        state_dev_final: Num(state_dev_final),
        pi_dev: Num(pi_dev),
        sparsity_rate: Num(support_fraction(&modified)),
        pi_dev_bound: Num(bound),
        bound_holds: pi_dev <= bound * (1.0 + 1e-9) + 1e-12,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{observe, simulate};
    use crate::graph::random_topology;
    use crate::linalg::{eigenvalues, spectrum_mismatch, Vector};

    #[test]
    fn ols_recovers_w_from_exciting_data() {
        let t = random_topology(5, 0.6, 4).unwrap();
        let trajs: Vec<Trajectory> = (0..5)
            .map(|i| {
                let mut x0 = Vector::zeros(5);
                x0[i] = 1.0;
                simulate(t.weights(), &x0, 1).unwrap()
            })
            .collect();
        let est = ols_estimate_multi(&trajs).unwrap();
        assert!(!est.rank_deficient);
        assert!((&est.estimate - t.weights()).amax() < 1e-12);
    }

    #[test]
    fn constant_trajectory_has_rank_one() {
        let t = random_topology(4, 0.5, 1).unwrap();
        let tr = simulate(t.weights(), &Vector::from_element(4, 3.0), 10).unwrap();
        let est = ols_estimate(&tr).unwrap();
        assert_eq!(est.data_rank, 1);
        assert!(est.rank_deficient);
        let lag = lag_estimate(&tr).unwrap();
        assert!(lag.ridge);
    }

    #[test]
    fn ols_needs_n_transitions() {
        let t = random_topology(4, 0.5, 1).unwrap();
        let tr = simulate(t.weights(), &Vector::from_element(4, 1.0), 3).unwrap();
        assert_eq!(
            ols_estimate(&tr).unwrap_err(),
            Error::HorizonTooShort { needed: 4, have: 3 }
        );
    }

    #[test]
    fn gamma_closed_form_scalar_multiple() {
        let t = random_topology(5, 0.5, 2).unwrap();
        let w = t.weights();
        let doubled = w * 2.0;
        let (er2, gamma) = scaled_offdiagonal_error(&doubled, w);
        assert!(er2 < 1e-14);
        assert!((gamma - 0.5).abs() < 1e-14);
        let (er2, gamma) = scaled_offdiagonal_error(&(-w), w);
        assert_eq!((er2, gamma), (1.0, GAMMA_CLAMP));
    }

    #[test]
    fn subspace_spectrum_matches_with_full_output() {
        let raw = random_topology(4, 0.8, 6).unwrap();
        let lazy = (raw.weights() + DenseMatrix::identity(4, 4)) * 0.5;
        let x0 = Vector::from_vec(vec![1.0, -0.4, 0.3, 2.0]);
        let tr = simulate(&lazy, &x0, 40).unwrap();
        let obs = observe(&DenseMatrix::identity(4, 4), &tr).unwrap();
        let est = subspace_identify(&obs, 4).unwrap();
        assert!(!est.rank_deficient);
        let a = eigenvalues(&est.estimate).unwrap();
        let b = eigenvalues(&lazy).unwrap();
        assert!(spectrum_mismatch(&a, &b) < 1e-6, "{a:?} vs {b:?}");
    }

    #[test]
    fn perfect_estimate_scores_zero() {
        let t = random_topology(5, 0.5, 3).unwrap();
        let x0 = Vector::from_fn(5, |i, _| i as f64);
        let tr = simulate(t.weights(), &x0, 20).unwrap();
        let est = IdentificationResult {
            estimate: t.weights().clone(),
            mode: EstimateMode::Direct,
            data_rank: 5,
            rank_deficient: false,
            ridge: false,
        };
        let s = score(&est, &t, &tr, &tr, &DenseMatrix::zeros(5, 5)).unwrap();
        assert_eq!(s.er1, Num(0.0));
        assert!(s.er2.0 < 1e-15);
        assert!((s.gamma_star.0 - 1.0).abs() < 1e-15);
        assert_eq!(s.state_dev_sup, Num(0.0));
        assert!(s.bound_holds);
    }
}
