//! Design -> simulate -> identify -> score pipeline for one scenario, and
//! the files it leaves behind.

use std::fmt;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::scenario::{Estimator, ExperimentScenario, Treatment};
use crate::adversary::{
    lag_estimate, ols_estimate, score, subspace_identify, IdentificationResult, PrivacyScore,
};
use crate::design::protocol::{run_protocol, Executor, ProtocolConfig, ProtocolOutcome};
use crate::design::{
    design_invariant_subspace, design_kernel_pb, design_laplacian, design_unobservable,
    FeedbackMatrix, Method,
};
use crate::dynamics::{observe, simulate, simulate_noisy, NoiseConfig, NoiseMode, Trajectory};
use crate::format::{fmt_f64, Num};
use crate::graph::{structural_report, GraphReport, Topology};
use crate::linalg::{group_inverse_i_minus, inf_norm, left_dominant_vector, DenseMatrix, Vector};
use crate::{Error, Result};

pub const SCORES_HEADER: &str = "scenario_id,method,T,run,er1,er2,gamma,state_dev,pi_dev,sparsity";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Design,
    Simulate,
    Identify,
    Score,
    Output,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Design => "design",
            Stage::Simulate => "simulate",
            Stage::Identify => "identify",
            Stage::Score => "score",
            Stage::Output => "output",
        })
    }
}

#[derive(Debug, Error)]
#[error("{stage} stage: {source}")]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

impl StageError {
    pub fn exit_code(&self) -> i32 {
        self.source.exit_code()
    }
}

pub(crate) trait AtStage<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError>;
}

impl<T> AtStage<T> for Result<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError> {
        self.map_err(|source| StageError { stage, source })
    }
}

/// Outcome of the design stage. `k` is zero for untreated and noisy runs.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub k: DenseMatrix,
    pub feedback: Option<FeedbackMatrix>,
    pub protocol: Option<ProtocolOutcome>,
}

pub fn design_stage(s: &ExperimentScenario, executor: Executor) -> Result<Prepared> {
    let t = &s.network;
    let n = t.n();
    let Treatment::Design(p) = &s.treatment else {
        return Ok(Prepared { k: DenseMatrix::zeros(n, n), feedback: None, protocol: None });
    };
    let (feedback, protocol) = match p.method {
        Method::Unobservable => {
            let c = s
                .observation
                .as_ref()
                .ok_or_else(|| Error::Config("unobservable design needs a partial observer".into()))?;
            (design_unobservable(t, c, p.seed)?, None)
        }
        Method::InvariantSubspace => (design_invariant_subspace(t)?, None),
        Method::KernelPb => (design_kernel_pb(t, p.seed)?, None),
        Method::Laplacian => (design_laplacian(t, p.alpha)?, None),
        Method::Distributed => {
            let tau = p.tau.ok_or_else(|| Error::Config("distributed design needs tau".into()))?;
            let cfg = ProtocolConfig { tau, delta: p.delta, seed: p.seed, executor };
            let out = run_protocol(t, &s.x0, &cfg)?;
            (out.feedback(t)?, Some(out))
        }
    };
    Ok(Prepared { k: feedback.k.clone(), feedback: Some(feedback), protocol })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub scenario_id: String,
    pub method: String,
    pub horizon: usize,
    pub run: usize,
    pub score: PrivacyScore,
}

impl ScoreRow {
    pub fn csv_line(&self) -> String {
        let s = &self.score;
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.scenario_id,
            self.method,
            self.horizon,
            self.run,
            fmt_f64(s.er1.0),
            fmt_f64(s.er2.0),
            fmt_f64(s.gamma_star.0),
            fmt_f64(s.state_dev_final.0),
            fmt_f64(s.pi_dev.0),
            fmt_f64(s.sparsity_rate.0),
        )
    }
}

pub fn scores_csv(rows: &[ScoreRow]) -> String {
    let mut out = String::from(SCORES_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

pub fn identify(
    estimator: Estimator,
    c: &DenseMatrix,
    traj: &Trajectory,
) -> Result<IdentificationResult> {
    match estimator {
        Estimator::LeastSquares => ols_estimate(traj),
        Estimator::Lag => lag_estimate(traj),
        Estimator::Subspace => subspace_identify(&observe(c, traj)?, traj.n()),
    }
}

fn noise_config(s: &ExperimentScenario) -> Option<NoiseConfig> {
    let (mode, variance_scale) = match s.treatment {
        Treatment::NoiseAdjacent { variance_scale } => (NoiseMode::Adjacent, variance_scale),
        Treatment::NoiseIndependent { variance_scale } => (NoiseMode::Independent, variance_scale),
        _ => return None,
    };
    Some(NoiseConfig { mode, seed: s.seed, variance_scale })
}

/// Scores every `(T, run)` cell. Runs execute on the rayon pool; the
/// result order (by `T`, then run) does not depend on scheduling.
pub fn score_cells(
    s: &ExperimentScenario,
    prepared: &Prepared,
) -> std::result::Result<Vec<ScoreRow>, StageError> {
    let t = &s.network;
    let w = t.weights();
    let max_t = s.max_horizon();
    let c = s.observation_matrix();
    let baseline = simulate(w, &s.x0, max_t).at(Stage::Simulate)?;
    let noise = noise_config(s);
    let deterministic = match noise {
        Some(_) => None,
        None => Some(simulate(&(w + &prepared.k), &s.x0, max_t).at(Stage::Simulate)?),
    };
    let per_run: Vec<std::result::Result<Vec<ScoreRow>, StageError>> = (0..s.runs)
        .into_par_iter()
        .map(|run| {
            let full = match (&noise, &deterministic) {
                (Some(cfg), _) => simulate_noisy(w, &s.x0, max_t, cfg, run as u64).at(Stage::Simulate)?,
                (None, Some(tr)) => tr.clone(),
                (None, None) => unreachable!("one trajectory source is always set"),
            };
            s.horizons
                .iter()
                .map(|&horizon| {
                    let traj = full.truncated(horizon);
                    let est = identify(s.estimator, &c, &traj).at(Stage::Identify)?;
                    let sc = score(&est, t, &traj, &baseline.truncated(horizon), &prepared.k)
                        .at(Stage::Score)?;
                    Ok(ScoreRow {
                        scenario_id: s.id.clone(),
                        method: s.treatment.label().to_string(),
                        horizon,
                        run,
                        score: sc,
                    })
                })
                .collect()
        })
        .collect();
    let mut rows = Vec::new();
    for r in per_run {
        rows.extend(r?);
    }
    rows.sort_by_key(|r| (s.horizons.iter().position(|&h| h == r.horizon), r.run));
    Ok(rows)
}

/// Checks a feedback matrix the way an emitted file is re-checked: the
/// convergence conditions for centralized designs; for the distributed
/// protocol the rooted/aperiodic structure and the stationary-deviation
/// bound.
#[derive(Debug, Clone, Serialize)]
pub struct FeedbackValidation {
    pub passed: bool,
    pub method: Method,
    pub convergence: crate::design::ConvergenceReport,
    pub structure: Option<GraphReport>,
    pub pi_dev: Num,
    pub pi_dev_bound: Num,
}

pub fn validate_feedback(t: &Topology, fb: &FeedbackMatrix) -> Result<FeedbackValidation> {
    let modified = fb.effective(t);
    let pi = t.stationary()?;
    let (structure, pi_dev, bound, passed) = if fb.method == Method::Distributed {
        let report = structural_report(&modified);
        let pi_mod = left_dominant_vector(&modified)?;
        let pi_dev = (&pi - &pi_mod).lp_norm(1);
        let bound = inf_norm(&group_inverse_i_minus(t.weights())?) * inf_norm(&fb.k);
        let nonneg = modified.iter().all(|v| *v >= -crate::design::NEG_TOL);
        let ok = report.root_exists
            && report.root_scc_aperiodic
            && nonneg
            && (fb.k.clone() * Vector::from_element(t.n(), 1.0)).amax() <= 1e-9
            && pi_dev <= bound * (1.0 + 1e-9) + 1e-12;
        (Some(report), pi_dev, bound, ok)
    } else {
        (None, 0.0, 0.0, fb.verification.all_ok())
    };
    Ok(FeedbackValidation {
        passed,
        method: fb.method,
        convergence: fb.verification.clone(),
        structure,
        pi_dev: Num(pi_dev),
        pi_dev_bound: Num(bound),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSeed {
    pub run: usize,
    pub seed: u64,
    /// ChaCha stream index used by the run.
    pub stream: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub scenario_id: String,
    pub scenario_sha256: String,
    /// Where the scenario was loaded from; relative references resolve
    /// against its directory.
    pub scenario_path: Option<String>,
    pub seed_override: Option<u64>,
    pub library_version: String,
    pub wall_clock_seconds: f64,
    pub runs: Vec<RunSeed>,
    pub outputs: Vec<OutputFile>,
    /// Scenario text; empty for reproduction runs.
    pub scenario: String,
    /// Figures regenerated by a reproduction run.
    #[serde(default)]
    pub figures: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// In-memory result files of one scenario run, in write order.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub files: Vec<(String, Vec<u8>)>,
    pub rows: Vec<ScoreRow>,
    pub prepared: Prepared,
}

pub fn execute(
    s: &ExperimentScenario,
    executor: Executor,
) -> std::result::Result<RunArtifacts, StageError> {
    let prepared = design_stage(s, executor).at(Stage::Design)?;
    let rows = score_cells(s, &prepared)?;
    let mut files = vec![("scores.csv".to_string(), scores_csv(&rows).into_bytes())];
    if let Some(fb) = &prepared.feedback {
        files.push(("feedback.json".into(), fb.to_json().into_bytes()));
        let check = validate_feedback(&s.network, fb).at(Stage::Output)?;
        let text = serde_json::to_string_pretty(&check).expect("validation serialisation cannot fail");
        files.push(("verification.json".into(), text.into_bytes()));
    }
    if let Some(p) = &prepared.protocol {
        files.push(("protocol_log.jsonl".into(), p.log_jsonl().into_bytes()));
    }
    Ok(RunArtifacts { files, rows, prepared })
}

pub fn manifest_for(
    s: &ExperimentScenario,
    scenario_text: &str,
    scenario_path: Option<&Path>,
    seed_override: Option<u64>,
    artifacts: &RunArtifacts,
    started: Instant,
) -> RunManifest {
    RunManifest {
        scenario_id: s.id.clone(),
        scenario_sha256: sha256_hex(scenario_text.as_bytes()),
        scenario_path: scenario_path.map(|p| p.display().to_string()),
        seed_override,
        library_version: env!("CARGO_PKG_VERSION").to_string(),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        runs: (0..s.runs).map(|run| RunSeed { run, seed: s.seed, stream: run as u64 }).collect(),
        outputs: artifacts
            .files
            .iter()
            .map(|(name, bytes)| OutputFile { file: name.clone(), sha256: sha256_hex(bytes) })
            .collect(),
        scenario: scenario_text.to_string(),
        figures: Vec::new(),
    }
}

pub fn write_files(dir: &Path, files: &[(String, Vec<u8>)]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, bytes) in files {
        std::fs::write(dir.join(name), bytes)?;
    }
    Ok(())
}

/// Re-executes the scenario (or the figures) recorded in a manifest and
/// lists the output files whose bytes differ from the recorded hashes.
pub fn replay_manifest(manifest: &RunManifest, executor: Executor) -> Result<Vec<String>> {
    let files = if manifest.figures.is_empty() {
        replay_scenario(manifest, executor)?
    } else {
        let mut files = Vec::new();
        for name in &manifest.figures {
            let figure: super::Figure = name.parse()?;
            let csv = super::reproduce::reproduce(figure, manifest.runs[0].seed, executor)
                .map_err(|e| e.source)?;
            files.push((figure.file_name(), csv.into_bytes()));
        }
        files
    };
    let mut mismatched = Vec::new();
    for out in &manifest.outputs {
        let now = files.iter().find(|(name, _)| *name == out.file);
        if now.map(|(_, bytes)| sha256_hex(bytes)) != Some(out.sha256.clone()) {
            mismatched.push(out.file.clone());
        }
    }
    Ok(mismatched)
}

fn replay_scenario(manifest: &RunManifest, executor: Executor) -> Result<Vec<(String, Vec<u8>)>> {
    let base = manifest
        .scenario_path
        .as_deref()
        .and_then(|p| Path::new(p).parent().map(Path::to_path_buf))
        .unwrap_or_else(|| Path::new(".").to_path_buf());
    let s = ExperimentScenario::parse(&manifest.scenario, &base, manifest.seed_override)?;
    Ok(execute(&s, executor).map_err(|e| e.source)?.files)
}

/// Manifest of a reproduction run over `figures` with one shared seed.
pub fn reproduce_manifest(
    figures: &[super::Figure],
    seed: u64,
    files: &[(String, Vec<u8>)],
    started: Instant,
) -> RunManifest {
    RunManifest {
        scenario_id: "reproduce".into(),
        scenario_sha256: sha256_hex(b""),
        scenario_path: None,
        seed_override: None,
        library_version: env!("CARGO_PKG_VERSION").to_string(),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        runs: vec![RunSeed { run: 0, seed, stream: 0 }],
        outputs: files
            .iter()
            .map(|(name, bytes)| OutputFile { file: name.clone(), sha256: sha256_hex(bytes) })
            .collect(),
        scenario: String::new(),
        figures: figures.iter().map(|f| f.as_str().to_string()).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(method: &str, extra: &str) -> ExperimentScenario {
        let text = format!(
            "version = 1\nid = \"t\"\nseed = 3\nruns = 2\nhorizons = [20, 200]\n\
             [network]\nn = 6\ndensity = 0.5\nseed = 11\n[method]\nname = \"{method}\"\n{extra}"
        );
        ExperimentScenario::parse(&text, Path::new("."), None).unwrap()
    }

    #[test]
    fn untreated_network_is_identified() {
        let s = scenario("none", "");
        let a = execute(&s, Executor::Sequential).unwrap();
        assert_eq!(a.rows.len(), 4);
        assert!(a.rows.iter().all(|r| r.score.er1.0 < 1e-6), "{:?}", a.rows);
    }

    #[test]
    fn noisy_runs_are_reproducible() {
        let s = scenario("noise_independent", "");
        let a = execute(&s, Executor::Sequential).unwrap();
        let b = execute(&s, Executor::Parallel).unwrap();
        assert_eq!(a.files, b.files);
        assert_ne!(a.rows[0].score, a.rows[1].score);
    }

    #[test]
    fn stage_is_reported() {
        let s = scenario("distributed", "tau = 1.0\ndelta = 5.0\n");
        let err = execute(&s, Executor::Sequential).unwrap_err();
        assert_eq!(err.stage, Stage::Design);
        assert_eq!(err.exit_code(), 2);
    }
}
