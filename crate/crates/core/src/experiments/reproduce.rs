//! Desk-scale versions of the three published experiments on the built-in
//! surrogate network: the budget sweep, the comparison with centralized
//! and Laplacian feedback, and the comparison with noise injection.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use super::run::{design_stage, score_cells, scores_csv, AtStage, Prepared, ScoreRow, Stage, StageError};
use super::scenario::{DesignParams, Estimator, ExperimentScenario, Treatment};
use super::surrogate;
use crate::adversary::support_fraction;
use crate::design::protocol::{run_protocol, Executor, ProtocolConfig};
use crate::design::Method;
use crate::format::fmt_f64;
use crate::linalg::{inf_norm, left_dominant_vector, DenseMatrix};
use crate::{Error, Result};

pub const TAU_GRID: [f64; 6] = [0.0, 0.4, 0.8, 1.2, 1.6, 2.0];
pub const COMPARE_TAU: f64 = 2.0;
/// `round(10^(k/4))` for `k = 5..=16`; the lag estimator needs `T >= n + 3`.
pub const NOISE_HORIZONS: [usize; 12] = [18, 32, 56, 100, 178, 316, 562, 1000, 1778, 3162, 5623, 10000];
pub const NOISE_RUNS: usize = 50;
pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    TauSweep,
    MethodCompare,
    NoiseCompare,
}

impl Figure {
    pub const ALL: [Figure; 3] = [Figure::TauSweep, Figure::MethodCompare, Figure::NoiseCompare];

    pub fn as_str(self) -> &'static str {
        match self {
            Figure::TauSweep => "tau_sweep",
            Figure::MethodCompare => "method_compare",
            Figure::NoiseCompare => "noise_compare",
        }
    }

    pub fn file_name(self) -> String {
        format!("{}.csv", self.as_str())
    }
}

impl fmt::Display for Figure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Figure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tau_sweep" => Ok(Figure::TauSweep),
            "method_compare" => Ok(Figure::MethodCompare),
            "noise_compare" => Ok(Figure::NoiseCompare),
            other => Err(Error::Config(format!("unknown figure {other:?}"))),
        }
    }
}

/// One point of the budget sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct TauPoint {
    pub tau: f64,
    pub sparsity_rate: f64,
    pub k_inf: f64,
    pub pi_dev_inf: f64,
    /// Nonzero entries per row of `W + K`.
    pub row_supports: Vec<usize>,
    pub root: usize,
}

/// Budget `0` means no feedback at all; positive budgets run the protocol
/// with the beacon seed that elects the surrogate's root.
pub fn tau_sweep(taus: &[f64], executor: Executor) -> Result<Vec<TauPoint>> {
    let t = surrogate::network()?;
    let x0 = surrogate::initial_state();
    let pi = t.stationary()?;
    let n = t.n();
    taus.iter()
        .map(|&tau| {
            let (k, root) = if tau == 0.0 {
                (DenseMatrix::zeros(n, n), surrogate::ROOT)
            } else {
                let cfg = ProtocolConfig { tau, delta: None, seed: surrogate::beacon_seed(), executor };
                let out = run_protocol(&t, &x0, &cfg)?;
                (out.k, out.root)
            };
            let modified = t.weights() + &k;
            let pi_mod = left_dominant_vector(&modified)?;
            let row_supports = (0..n)
                .map(|i| modified.row(i).iter().filter(|v| v.abs() > 1e-12).count())
                .collect();
            Ok(TauPoint {
                tau,
                sparsity_rate: support_fraction(&modified),
                k_inf: inf_norm(&k),
                pi_dev_inf: (&pi - &pi_mod).amax(),
                row_supports,
                root,
            })
        })
        .collect()
}

pub fn tau_sweep_csv(points: &[TauPoint]) -> String {
    let mut out = String::from("tau,sparsity_rate,k_inf,pi_dev_inf\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{},{}\n",
            fmt_f64(p.tau),
            fmt_f64(p.sparsity_rate),
            fmt_f64(p.k_inf),
            fmt_f64(p.pi_dev_inf)
        ));
    }
    out
}

fn surrogate_scenario(
    id: &str,
    treatment: Treatment,
    horizons: Vec<usize>,
    runs: usize,
    seed: u64,
    estimator: Estimator,
) -> Result<ExperimentScenario> {
    Ok(ExperimentScenario {
        id: id.to_string(),
        seed,
        runs,
        horizons,
        output_dir: None,
        network: surrogate::network()?,
        x0: surrogate::initial_state(),
        treatment,
        observation: None,
        estimator,
    })
}

fn design(method: Method, tau: Option<f64>, seed: u64) -> Treatment {
    Treatment::Design(DesignParams { method, tau, delta: None, alpha: None, seed })
}

fn prepare(s: &ExperimentScenario, executor: Executor) -> std::result::Result<Prepared, StageError> {
    design_stage(s, executor).at(Stage::Design)
}

/// Kernel-space (M1), Laplacian (M2) and the distributed protocol at
/// `tau = 2`, scored by least squares on a single trajectory for every
/// `T` in `n..=60`.
pub fn method_compare(executor: Executor) -> std::result::Result<Vec<ScoreRow>, StageError> {
    let n = 8;
    let horizons: Vec<usize> = (n..=60).collect();
    let treatments = [
        design(Method::KernelPb, None, 0),
        design(Method::Laplacian, None, 0),
        design(Method::Distributed, Some(COMPARE_TAU), surrogate::beacon_seed()),
    ];
    let mut rows = Vec::new();
    for tr in treatments {
        let s = surrogate_scenario(
            "method_compare",
            tr,
            horizons.clone(),
            1,
            DEFAULT_SEED,
            Estimator::LeastSquares,
        )
        .at(Stage::Design)?;
        let prepared = prepare(&s, executor)?;
        rows.extend(score_cells(&s, &prepared)?);
    }
    Ok(rows)
}

/// Adjacent noise (M3, lag estimator) and independent noise (M4, least
/// squares) over `runs` seeded runs, and the distributed protocol at
/// `tau = 2` (deterministic, one run).
pub fn noise_compare(
    horizons: &[usize],
    runs: usize,
    seed: u64,
    executor: Executor,
) -> std::result::Result<Vec<ScoreRow>, StageError> {
    let cases = [
        (Treatment::NoiseAdjacent { variance_scale: 1.0 }, runs, Estimator::Lag),
        (Treatment::NoiseIndependent { variance_scale: 1.0 }, runs, Estimator::LeastSquares),
        (
            design(Method::Distributed, Some(COMPARE_TAU), surrogate::beacon_seed()),
            1,
            Estimator::LeastSquares,
        ),
    ];
    let results: Vec<std::result::Result<Vec<ScoreRow>, StageError>> = cases
        .into_par_iter()
        .map(|(tr, runs, est)| {
            let s = surrogate_scenario("noise_compare", tr, horizons.to_vec(), runs, seed, est)
                .at(Stage::Design)?;
            let prepared = prepare(&s, executor)?;
            score_cells(&s, &prepared)
        })
        .collect();
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?);
    }
    Ok(rows)
}

/// CSV bytes of one figure.
pub fn reproduce(
    figure: Figure,
    seed: u64,
    executor: Executor,
) -> std::result::Result<String, StageError> {
    match figure {
        Figure::TauSweep => tau_sweep(&TAU_GRID, executor)
            .map(|p| tau_sweep_csv(&p))
            .at(Stage::Design),
        Figure::MethodCompare => method_compare(executor).map(|r| scores_csv(&r)),
        Figure::NoiseCompare => {
            noise_compare(&NOISE_HORIZONS, NOISE_RUNS, seed, executor).map(|r| scores_csv(&r))
        }
    }
}
