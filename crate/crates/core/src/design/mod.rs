//! Feedback matrices `K` that are added to the consensus weights, and the
//! checks that `W + K` still reaches the original consensus value.

mod central;
pub mod protocol;
pub mod row;

pub use central::{
    default_laplacian_alpha, design_invariant_subspace, design_kernel_pb, design_laplacian,
    design_unobservable, kernel_constraint_matrix, select_eigenmodes, EigenmodeSelection,
};

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::format::{parse_json_matrix, MatrixJson, Num};
use crate::graph::Topology;
use crate::linalg::{eigenvalues, DenseMatrix, Vector};
use crate::{Error, Result};

pub(crate) const EQ_TOL: f64 = 1e-9;
pub(crate) const MODULUS_MARGIN: f64 = 1e-9;
pub(crate) const NEG_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Unobservable,
    InvariantSubspace,
    KernelPb,
    Laplacian,
    Distributed,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Unobservable => "unobservable",
            Method::InvariantSubspace => "invariant_subspace",
            Method::KernelPb => "kernel_pb",
            Method::Laplacian => "laplacian",
            Method::Distributed => "distributed",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unobservable" => Ok(Method::Unobservable),
            "invariant_subspace" => Ok(Method::InvariantSubspace),
            "kernel_pb" => Ok(Method::KernelPb),
            "laplacian" => Ok(Method::Laplacian),
            "distributed" => Ok(Method::Distributed),
            other => Err(Error::Config(format!("unknown design method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub row_sum_zero: bool,
    pub row_sum_residual: Num,
    pub pi_annihilation: bool,
    pub pi_residual: Num,
    pub nonneg: bool,
    pub min_entry: Num,
    pub eig_moduli_ok: bool,
    pub max_modulus: Num,
}

impl ConvergenceReport {
    pub fn all_ok(&self) -> bool {
        self.row_sum_zero && self.pi_annihilation && self.nonneg && self.eig_moduli_ok
    }
}

/// Largest modulus among the eigenvalues of `a` other than the one closest
/// to 1.
pub fn second_modulus(a: &DenseMatrix) -> Result<f64> {
    if a.nrows() <= 1 {
        return Ok(0.0);
    }
    let vals = eigenvalues(a)?;
    let unit = crate::linalg::closest_to_one(&vals);
    Ok(vals
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != unit)
        .map(|(_, v)| v.norm())
        .fold(0.0, f64::max))
}

/// Evaluates `K 1 = 0`, `pi^T K = 0`, `W + K >= 0` and the contraction of
/// every non-unit eigenvalue of `W + K`.
pub fn check_convergence(t: &Topology, k: &DenseMatrix) -> Result<ConvergenceReport> {
    let n = t.n();
    if k.shape() != (n, n) {
        return Err(Error::DimensionMismatch(format!(
            "feedback is {}x{}, network has {n} nodes",
            k.nrows(),
            k.ncols()
        )));
    }
    let pi = t.stationary()?;
    let ones = Vector::from_element(n, 1.0);
    let row_sum_residual = (k * &ones).amax();
    let pi_residual = (k.transpose() * &pi).amax();
    let w_eff = t.weights() + k;
    let min_entry = w_eff.iter().copied().fold(f64::INFINITY, f64::min);
    let max_modulus = second_modulus(&w_eff)?;
    Ok(ConvergenceReport {
        row_sum_zero: row_sum_residual <= EQ_TOL,
        row_sum_residual: Num(row_sum_residual),
        pi_annihilation: pi_residual <= EQ_TOL,
        pi_residual: Num(pi_residual),
        nonneg: min_entry >= -NEG_TOL,
        min_entry: Num(min_entry),
        eig_moduli_ok: max_modulus < 1.0 - MODULUS_MARGIN,
        max_modulus: Num(max_modulus),
    })
}

/// Entries where `K` may be nonzero in the centralized designs: exactly the
/// support of `W`, row-major.
pub(crate) fn allowed_entries(t: &Topology) -> Vec<(usize, usize)> {
    t.support()
}

/// Sets `K_ij = -W_ij` wherever `W_ij + K_ij` is negative by at most
/// `NEG_TOL`, so rounding never produces a spurious negative weight.
pub(crate) fn snap_feedback(w: &DenseMatrix, k: &mut DenseMatrix) {
    for i in 0..w.nrows() {
        for j in 0..w.ncols() {
            let s = w[(i, j)] + k[(i, j)];
            if s < 0.0 && s >= -NEG_TOL {
                k[(i, j)] = -w[(i, j)];
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct FeedbackMatrix {
    pub k: DenseMatrix,
    pub method: Method,
    pub verification: ConvergenceReport,
    /// Free-form flags raised during the design.
    pub notes: Vec<String>,
}

impl FeedbackMatrix {
    pub(crate) fn verified(t: &Topology, k: DenseMatrix, method: Method) -> Result<Self> {
        let verification = check_convergence(t, &k)?;
        Ok(FeedbackMatrix { k, method, verification, notes: Vec::new() })
    }

    pub fn n(&self) -> usize {
        self.k.nrows()
    }

    /// `W + K`.
    pub fn effective(&self, t: &Topology) -> DenseMatrix {
        t.weights() + &self.k
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Repr<'a> {
            n: usize,
            k: MatrixJson<'a>,
            method: Method,
            verification: &'a ConvergenceReport,
            notes: &'a [String],
        }
        serde_json::to_string_pretty(&Repr {
            n: self.n(),
            k: MatrixJson(&self.k),
            method: self.method,
            verification: &self.verification,
            notes: &self.notes,
        })
        .expect("feedback serialisation cannot fail")
    }

    /// Loads `K` and its method, then re-verifies against `t`.
    pub fn from_json(text: &str, t: &Topology) -> Result<Self> {
        let v: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("feedback json: {e}")))?;
        let k = parse_json_matrix(&v["k"])?;
        let method: Method = v["method"]
            .as_str()
            .ok_or_else(|| Error::Config("feedback json lacks a method".into()))?
            .parse()?;
        let notes = v["notes"]
            .as_array()
            .map(|a| a.iter().filter_map(|s| s.as_str().map(String::from)).collect())
            .unwrap_or_default();
        let mut fb = FeedbackMatrix::verified(t, k, method)?;
        fb.notes = notes;
        Ok(fb)
    }
}
