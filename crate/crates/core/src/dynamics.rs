//! Consensus simulation, observation model, and noise-injection baselines.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::format::fmt_f64;
use crate::linalg::{DenseMatrix, Vector};
use crate::{Error, Result};

/// States `x_0..x_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vector>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.states.len() - 1
    }

    pub fn n(&self) -> usize {
        self.states[0].len()
    }

    /// Columns `x_from ..= x_to` as an `n x (to - from + 1)` matrix.
    pub fn columns(&self, from: usize, to: usize) -> DenseMatrix {
        let n = self.n();
        DenseMatrix::from_fn(n, to + 1 - from, |i, k| self.states[from + k][i])
    }

    /// Keeps `x_0..x_t`.
    pub fn truncated(&self, t: usize) -> Trajectory {
        Trajectory { states: self.states[..=t.min(self.horizon())].to_vec() }
    }

    /// `sup_t ||x_t - other_t||_2` over the common horizon.
    pub fn sup_deviation(&self, other: &Trajectory) -> f64 {
        self.states
            .iter()
            .zip(&other.states)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// First `t` with `||x_{t+1} - x_t||_inf < 1e-12`, or `T`.
    pub fn settle_time(&self) -> usize {
        (0..self.horizon())
            .find(|&t| (&self.states[t + 1] - &self.states[t]).amax() < 1e-12)
            .unwrap_or(self.horizon())
    }

    pub fn to_csv(&self) -> String {
        series_csv("x", &self.states)
    }
}

fn series_csv(prefix: &str, series: &[Vector]) -> String {
    let width = series.first().map_or(0, |v| v.len());
    let mut out = String::from("t");
    for i in 1..=width {
        out.push_str(&format!(",{prefix}{i}"));
    }
    out.push('\n');
    for (t, v) in series.iter().enumerate() {
        out.push_str(&t.to_string());
        for x in v.iter() {
            out.push(',');
            out.push_str(&fmt_f64(*x));
        }
        out.push('\n');
    }
    out
}

/// `x_{t+1} = W_eff x_t` for `t = 0..T-1`.
pub fn simulate(w_eff: &DenseMatrix, x0: &Vector, horizon: usize) -> Result<Trajectory> {
    check_square_with(w_eff, x0)?;
    if horizon == 0 {
        return Err(Error::HorizonTooShort { needed: 1, have: 0 });
    }
    let mut states = Vec::with_capacity(horizon + 1);
    states.push(x0.clone());
    for t in 0..horizon {
        let next = w_eff * &states[t];
        states.push(next);
    }
    Ok(Trajectory { states })
}

fn check_square_with(w: &DenseMatrix, x0: &Vector) -> Result<()> {
    if !w.is_square() || w.nrows() != x0.len() {
        return Err(Error::DimensionMismatch(format!(
            "matrix {}x{} with state of length {}",
            w.nrows(),
            w.ncols(),
            x0.len()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationRecord {
    pub c: DenseMatrix,
    /// `y_0..y_{T-1}`
    pub outputs: Vec<Vector>,
}

impl ObservationRecord {
    pub fn m(&self) -> usize {
        self.c.nrows()
    }

    pub fn to_csv(&self) -> String {
        series_csv("y", &self.outputs)
    }
}

/// `y_t = C x_t` for `t = 0..T-1`.
pub fn observe(c: &DenseMatrix, traj: &Trajectory) -> Result<ObservationRecord> {
    if c.ncols() != traj.n() || c.nrows() > c.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "observation matrix {}x{} for {} states",
            c.nrows(),
            c.ncols(),
            traj.n()
        )));
    }
    let outputs = traj.states[..traj.horizon()].iter().map(|x| c * x).collect();
    Ok(ObservationRecord { c: c.clone(), outputs })
}

/// Stack of `C W^k`, `k = 0..n-1`.
pub fn observability_matrix(w_eff: &DenseMatrix, c: &DenseMatrix) -> Result<DenseMatrix> {
    let n = w_eff.nrows();
    if !w_eff.is_square() || c.ncols() != n {
        return Err(Error::DimensionMismatch("observability: C and W disagree".into()));
    }
    let m = c.nrows();
    let mut out = DenseMatrix::zeros(n * m, n);
    let mut block = c.clone();
    for k in 0..n {
        out.view_mut((k * m, 0), (m, n)).copy_from(&block);
        block = &block * w_eff;
    }
    Ok(out)
}

/// Block Hankel matrix whose column `t` stacks `y_t .. y_{t+n-1}`.
pub fn build_hankel(obs: &ObservationRecord, n: usize) -> Result<DenseMatrix> {
    let t_len = obs.outputs.len();
    if n == 0 || t_len < n {
        return Err(Error::HorizonTooShort { needed: n.max(1), have: t_len });
    }
    let m = obs.m();
    let cols = t_len - n + 1;
    Ok(DenseMatrix::from_fn(n * m, cols, |r, col| {
        obs.outputs[col + r / m][r % m]
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseMode {
    /// `x_{t+1} = W x_t + w_t - w_{t-1}`
    Adjacent,
    /// `x_{t+1} = W x_t + w_t`
    Independent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseConfig {
    pub mode: NoiseMode,
    pub seed: u64,
    /// Multiplies the variance law `1/(t+1)^2`; `0` disables the noise.
    pub variance_scale: f64,
}

impl NoiseConfig {
    pub fn new(mode: NoiseMode, seed: u64) -> Self {
        NoiseConfig { mode, seed, variance_scale: 1.0 }
    }

    pub fn std_dev(&self, t: usize) -> f64 {
        (self.variance_scale / ((t + 1) as f64).powi(2)).sqrt()
    }
}

/// Noisy consensus run. Each `run` index draws from its own ChaCha stream
/// of `cfg.seed`, so runs are reproducible in any execution order.
pub fn simulate_noisy(
    w: &DenseMatrix,
    x0: &Vector,
    horizon: usize,
    cfg: &NoiseConfig,
    run: u64,
) -> Result<Trajectory> {
    check_square_with(w, x0)?;
    if horizon == 0 {
        return Err(Error::HorizonTooShort { needed: 1, have: 0 });
    }
    let n = x0.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(run);
    let mut states = Vec::with_capacity(horizon + 1);
    states.push(x0.clone());
    let mut previous = Vector::zeros(n);
    for t in 0..horizon {
        let sd = cfg.std_dev(t);
        let omega = Vector::from_fn(n, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            sd * z
        });
        let mut next = w * &states[t] + &omega;
        if cfg.mode == NoiseMode::Adjacent {
            next -= &previous;
        }
        states.push(next);
        previous = omega;
    }
    Ok(Trajectory { states })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::random_topology;

    #[test]
    fn identity_is_constant() {
        let x0 = Vector::from_vec(vec![1.0, -2.0, 3.0]);
        let tr = simulate(&DenseMatrix::identity(3, 3), &x0, 5).unwrap();
        assert!(tr.states.iter().all(|x| *x == x0));
        assert_eq!(tr.horizon(), 5);
    }

    #[test]
    fn one_step_average() {
        let w = DenseMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5]);
        let tr = simulate(&w, &Vector::from_vec(vec![0.0, 2.0]), 1).unwrap();
        assert_eq!(tr.states[1], Vector::from_vec(vec![1.0, 1.0]));
    }

    #[test]
    fn dimension_errors() {
        let w = DenseMatrix::identity(3, 3);
        assert!(matches!(
            simulate(&w, &Vector::zeros(2), 3),
            Err(Error::DimensionMismatch(_))
        ));
        let tr = simulate(&w, &Vector::zeros(3), 3).unwrap();
        assert!(observe(&DenseMatrix::identity(2, 2), &tr).is_err());
    }

    #[test]
    fn observe_selects_first_component() {
        let t = random_topology(4, 0.5, 2).unwrap();
        let tr = simulate(t.weights(), &Vector::from_vec(vec![1.0, 2.0, 3.0, 4.0]), 6).unwrap();
        let mut c = DenseMatrix::zeros(1, 4);
        c[(0, 0)] = 1.0;
        let obs = observe(&c, &tr).unwrap();
        assert_eq!(obs.outputs.len(), 6);
        for (t, y) in obs.outputs.iter().enumerate() {
            assert_eq!(y[0], tr.states[t][0]);
        }
    }

    #[test]
    fn nilpotent_observability() {
        let mut nil2 = DenseMatrix::zeros(3, 3);
        nil2[(0, 1)] = 1.0;
        let mut c = DenseMatrix::zeros(1, 3);
        c[(0, 0)] = 1.0;
        let q = observability_matrix(&nil2, &c).unwrap();
        assert_eq!(q.shape(), (3, 3));
        assert_eq!(q.row(1)[1], 1.0);
        assert_eq!(q.row(2).amax(), 0.0);
        let q = observability_matrix(&nil2, &DenseMatrix::identity(3, 3)).unwrap();
        assert_eq!(q.view((0, 0), (3, 3)).into_owned(), DenseMatrix::identity(3, 3));
    }

    #[test]
    fn hankel_single_column() {
        let t = random_topology(3, 0.5, 4).unwrap();
        let tr = simulate(t.weights(), &Vector::from_vec(vec![1.0, 0.0, -1.0]), 3).unwrap();
        let obs = observe(&DenseMatrix::identity(3, 3), &tr).unwrap();
        let h = build_hankel(&obs, 3).unwrap();
        assert_eq!(h.shape(), (9, 1));
        for k in 0..3 {
            for i in 0..3 {
                assert_eq!(h[(3 * k + i, 0)], tr.states[k][i]);
            }
        }
        assert!(matches!(
            build_hankel(&obs, 4),
            Err(Error::HorizonTooShort { .. })
        ));
    }

    #[test]
    fn noise_is_reproducible_per_run() {
        let t = random_topology(5, 0.5, 1).unwrap();
        let x0 = Vector::from_element(5, 1.0);
        let cfg = NoiseConfig::new(NoiseMode::Adjacent, 11);
        let a = simulate_noisy(t.weights(), &x0, 20, &cfg, 3).unwrap();
        let b = simulate_noisy(t.weights(), &x0, 20, &cfg, 3).unwrap();
        let c = simulate_noisy(t.weights(), &x0, 20, &cfg, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(cfg.std_dev(0), 1.0);
    }

    #[test]
    fn zero_variance_matches_noiseless() {
        let t = random_topology(5, 0.5, 1).unwrap();
        let x0 = Vector::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        for mode in [NoiseMode::Adjacent, NoiseMode::Independent] {
            let mut cfg = NoiseConfig::new(mode, 0);
            cfg.variance_scale = 0.0;
            let noisy = simulate_noisy(t.weights(), &x0, 30, &cfg, 0).unwrap();
            assert_eq!(noisy, simulate(t.weights(), &x0, 30).unwrap());
        }
    }
}
