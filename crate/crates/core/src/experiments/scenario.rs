//! Declarative experiment descriptions, stored as TOML.
//!
//! ```toml
//! version = 1
//! id = "kernel-demo"
//! seed = 7
//! runs = 1
//! horizons = [20, 200]
//!
//! [network]
//! n = 8
//! density = 0.4
//! seed = 3
//!
//! [method]
//! name = "kernel_pb"
//! ```

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use super::surrogate;
use crate::design::Method;
use crate::format::matrix_from_text;
use crate::graph::{random_topology, Topology};
use crate::linalg::{from_rows, DenseMatrix, Vector};
use crate::{Error, Result};

pub const SCENARIO_VERSION: u32 = 1;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    version: u32,
    id: Option<String>,
    #[serde(default)]
    seed: u64,
    #[serde(default = "one")]
    runs: usize,
    horizons: Vec<usize>,
    output_dir: Option<PathBuf>,
    network: RawNetwork,
    #[serde(default)]
    x0: RawInitial,
    method: RawMethod,
    #[serde(default)]
    observer: RawObserver,
    #[serde(default)]
    adversary: RawAdversary,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNetwork {
    weights: Option<Vec<Vec<f64>>>,
    file: Option<PathBuf>,
    builtin: Option<String>,
    n: Option<usize>,
    density: Option<f64>,
    seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInitial {
    values: Option<Vec<f64>>,
    seed: Option<u64>,
    /// Half-width of the uniform draw, default 1.
    scale: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMethod {
    name: String,
    tau: Option<f64>,
    delta: Option<f64>,
    alpha: Option<f64>,
    seed: Option<u64>,
    variance_scale: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawObserver {
    kind: Option<String>,
    c: Option<Vec<Vec<f64>>>,
    /// 1-based node labels whose states are measured.
    nodes: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAdversary {
    estimator: Option<String>,
}

/// What the experiment does to the network before the observer looks.
#[derive(Debug, Clone, PartialEq)]
pub enum Treatment {
    /// Unmodified consensus.
    None,
    Design(DesignParams),
    /// Adjacent decaying noise (`w_t - w_{t-1}`).
    NoiseAdjacent { variance_scale: f64 },
    /// Independent decaying noise.
    NoiseIndependent { variance_scale: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignParams {
    pub method: Method,
    pub tau: Option<f64>,
    pub delta: Option<f64>,
    pub alpha: Option<f64>,
    pub seed: u64,
}

impl Treatment {
    pub fn label(&self) -> &'static str {
        match self {
            Treatment::None => "none",
            Treatment::Design(p) => p.method.as_str(),
            Treatment::NoiseAdjacent { .. } => "noise_adjacent",
            Treatment::NoiseIndependent { .. } => "noise_independent",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    LeastSquares,
    Lag,
    Subspace,
}

impl Estimator {
    pub fn as_str(self) -> &'static str {
        match self {
            Estimator::LeastSquares => "ols",
            Estimator::Lag => "lag",
            Estimator::Subspace => "subspace",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentScenario {
    pub id: String,
    pub seed: u64,
    pub runs: usize,
    pub horizons: Vec<usize>,
    pub output_dir: Option<PathBuf>,
    pub network: Topology,
    pub x0: Vector,
    pub treatment: Treatment,
    /// `None` when every state is observed.
    pub observation: Option<DenseMatrix>,
    pub estimator: Estimator,
}

impl ExperimentScenario {
    /// Parses scenario text; relative file references resolve against
    /// `base_dir`. `seed_override` replaces the top-level seed.
    pub fn parse(text: &str, base_dir: &Path, seed_override: Option<u64>) -> Result<Self> {
        let raw: RawScenario =
            toml::from_str(text).map_err(|e| Error::Config(format!("scenario: {e}")))?;
        if raw.version != SCENARIO_VERSION {
            return Err(Error::Config(format!(
                "unsupported scenario version {} (expected {SCENARIO_VERSION})",
                raw.version
            )));
        }
        let seed = seed_override.unwrap_or(raw.seed);
        let network = build_network(&raw.network, base_dir, seed)?;
        let n = network.n();
        if raw.runs == 0 {
            return Err(Error::Config("runs must be at least 1".into()));
        }
        if raw.horizons.is_empty() {
            return Err(Error::Config("horizons must list at least one T".into()));
        }
        if let Some(&t) = raw.horizons.iter().find(|&&t| t < n) {
            return Err(Error::Config(format!("horizon {t} is shorter than n = {n}")));
        }
        // the built-in surrogate carries its own initial state and beacon seed
        let builtin = raw.network.builtin.is_some();
        let x0 = match &raw.x0 {
            RawInitial { values: None, seed: None, scale: None } if builtin => surrogate::initial_state(),
            other => build_initial(other, n, seed)?,
        };
        let beacon_seed = if builtin { surrogate::beacon_seed() } else { seed };
        let treatment = build_treatment(&raw.method, beacon_seed)?;
        let observation = build_observer(&raw.observer, n)?;
        if matches!(&treatment, Treatment::Design(p) if p.method == Method::Unobservable)
            && observation.is_none()
        {
            return Err(Error::Config("unobservable design needs a partial observer".into()));
        }
        let estimator = match raw.adversary.estimator.as_deref().unwrap_or("auto") {
            "auto" => match (&treatment, &observation) {
                (_, Some(_)) => Estimator::Subspace,
                (Treatment::NoiseAdjacent { .. }, None) => Estimator::Lag,
                _ => Estimator::LeastSquares,
            },
            "ols" => Estimator::LeastSquares,
            "lag" => Estimator::Lag,
            "subspace" => Estimator::Subspace,
            other => return Err(Error::Config(format!("unknown estimator {other:?}"))),
        };
        if estimator != Estimator::Subspace && observation.is_some() {
            return Err(Error::Config(format!(
                "estimator {} needs full observation",
                estimator.as_str()
            )));
        }
        Ok(ExperimentScenario {
            id: raw.id.unwrap_or_else(|| "scenario".into()),
            seed,
            runs: raw.runs,
            horizons: raw.horizons,
            output_dir: raw.output_dir.map(|p| base_dir.join(p)),
            network,
            x0,
            treatment,
            observation,
            estimator,
        })
    }

    pub fn load(path: &Path, seed_override: Option<u64>) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Ok((Self::parse(&text, base, seed_override)?, text))
    }

    /// Observation matrix, `I` for full observation.
    pub fn observation_matrix(&self) -> DenseMatrix {
        let n = self.network.n();
        self.observation.clone().unwrap_or_else(|| DenseMatrix::identity(n, n))
    }

    pub fn max_horizon(&self) -> usize {
        self.horizons.iter().copied().max().unwrap_or(0)
    }
}

fn build_network(raw: &RawNetwork, base_dir: &Path, seed: u64) -> Result<Topology> {
    let given = [raw.weights.is_some(), raw.file.is_some(), raw.builtin.is_some(), raw.n.is_some()]
        .iter()
        .filter(|b| **b)
        .count();
    if given != 1 {
        return Err(Error::Config(
            "network needs exactly one of weights, file, builtin or n".into(),
        ));
    }
    if let Some(rows) = &raw.weights {
        return Topology::validate(from_rows(rows)?);
    }
    if let Some(file) = &raw.file {
        let path = base_dir.join(file);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Error::Config(format!("cannot read network {}: {e}", path.display())))?;
        return if text.trim_start().starts_with('{') {
            Topology::from_json(&text)
        } else {
            Topology::validate(matrix_from_text(&text)?)
        };
    }
    if let Some(name) = &raw.builtin {
        return match name.as_str() {
            surrogate::NAME => surrogate::network(),
            other => Err(Error::Config(format!("unknown builtin network {other:?}"))),
        };
    }
    let n = raw.n.expect("checked above");
    random_topology(n, raw.density.unwrap_or(0.4), raw.seed.unwrap_or(seed))
}

fn build_initial(raw: &RawInitial, n: usize, seed: u64) -> Result<Vector> {
    if let Some(v) = &raw.values {
        if v.len() != n {
            return Err(Error::Config(format!("x0 has {} values, network has {n} nodes", v.len())));
        }
        return Ok(Vector::from_column_slice(v));
    }
    let scale = raw.scale.unwrap_or(1.0);
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::Config(format!("x0 scale must be positive, got {scale}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(raw.seed.unwrap_or(seed));
    Ok(Vector::from_fn(n, |_, _| scale * rng.random_range(-1.0..1.0)))
}

fn build_treatment(raw: &RawMethod, seed: u64) -> Result<Treatment> {
    let variance_scale = raw.variance_scale.unwrap_or(1.0);
    if !(variance_scale >= 0.0 && variance_scale.is_finite()) {
        return Err(Error::Config(format!("variance_scale must be nonnegative, got {variance_scale}")));
    }
    Ok(match raw.name.as_str() {
        "none" => Treatment::None,
        "noise_adjacent" => Treatment::NoiseAdjacent { variance_scale },
        "noise_independent" => Treatment::NoiseIndependent { variance_scale },
        name => {
            let method: Method = name.parse()?;
            if method == Method::Distributed && raw.tau.is_none() {
                return Err(Error::Config("distributed design needs tau".into()));
            }
            Treatment::Design(DesignParams {
                method,
                tau: raw.tau,
                delta: raw.delta,
                alpha: raw.alpha,
                seed: raw.seed.unwrap_or(seed),
            })
        }
    })
}

fn build_observer(raw: &RawObserver, n: usize) -> Result<Option<DenseMatrix>> {
    match raw.kind.as_deref().unwrap_or("full") {
        "full" => {
            if raw.c.is_some() || raw.nodes.is_some() {
                return Err(Error::Config("full observer takes no c or nodes".into()));
            }
            Ok(None)
        }
        "partial" => {
            let c = match (&raw.c, &raw.nodes) {
                (Some(rows), None) => from_rows(rows)?,
                (None, Some(nodes)) => {
                    let mut c = DenseMatrix::zeros(nodes.len(), n);
                    for (r, &node) in nodes.iter().enumerate() {
                        if node == 0 || node > n {
                            return Err(Error::Config(format!("observed node {node} out of 1..={n}")));
                        }
                        c[(r, node - 1)] = 1.0;
                    }
                    c
                }
                _ => return Err(Error::Config("partial observer needs exactly one of c or nodes".into())),
            };
            if c.ncols() != n || c.nrows() == 0 || c.nrows() > n {
                return Err(Error::Config(format!(
                    "observation matrix is {}x{}, expected m x {n} with 1 <= m <= {n}",
                    c.nrows(),
                    c.ncols()
                )));
            }
            Ok(Some(c))
        }
        other => Err(Error::Config(format!("unknown observer kind {other:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"
version = 1
id = "basic"
seed = 4
horizons = [10, 20]

[network]
n = 5
density = 0.5

[method]
name = "laplacian"
"#;

    #[test]
    fn parses_generated_network() {
        let s = ExperimentScenario::parse(BASIC, Path::new("."), None).unwrap();
        assert_eq!(s.network.n(), 5);
        assert_eq!(s.runs, 1);
        assert_eq!(s.estimator, Estimator::LeastSquares);
        assert_eq!(s.treatment.label(), "laplacian");
    }

    #[test]
    fn seed_override_changes_x0() {
        let a = ExperimentScenario::parse(BASIC, Path::new("."), None).unwrap();
        let b = ExperimentScenario::parse(BASIC, Path::new("."), Some(99)).unwrap();
        assert_ne!(a.x0, b.x0);
    }

    #[test]
    fn rejects_wrong_version_and_short_horizon() {
        let bad = BASIC.replace("version = 1", "version = 2");
        assert!(matches!(
            ExperimentScenario::parse(&bad, Path::new("."), None),
            Err(Error::Config(_))
        ));
        let short = BASIC.replace("[10, 20]", "[3]");
        assert!(matches!(
            ExperimentScenario::parse(&short, Path::new("."), None),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn missing_network_file_is_config_error() {
        let text = BASIC.replace("n = 5\ndensity = 0.5", "file = \"nope.json\"");
        assert!(matches!(
            ExperimentScenario::parse(&text, Path::new("/nonexistent"), None),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn partial_observer_by_nodes() {
        let text = format!("{BASIC}\n[observer]\nkind = \"partial\"\nnodes = [1, 3]\n");
        let s = ExperimentScenario::parse(&text, Path::new("."), None).unwrap();
        let c = s.observation.unwrap();
        assert_eq!(c.shape(), (2, 5));
        assert_eq!(c[(1, 2)], 1.0);
        assert_eq!(s.estimator, Estimator::Subspace);
    }
}
