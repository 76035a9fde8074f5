use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use topopriv::design::protocol::Executor;
use topopriv::design::FeedbackMatrix;
use topopriv::experiments::reproduce::{reproduce, DEFAULT_SEED};
use topopriv::experiments::run::{
    design_stage, execute, manifest_for, replay_manifest, reproduce_manifest, validate_feedback,
    write_files,
};
use topopriv::experiments::{ExperimentScenario, Figure, RunManifest};
use topopriv::Error;

#[derive(Parser)]
#[command(name = "topopriv", version, about = "Topology-private feedback design for consensus networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML)
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replaces the scenario's seed
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores)
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Design the feedback matrix and write it with its verification report
    Design(Common),
    /// Design, simulate, identify and score every (T, run) cell
    Run(Common),
    /// Regenerate the CSVs behind the published figures
    Reproduce {
        /// tau_sweep, method_compare, noise_compare or all
        #[arg(long, default_value = "all")]
        figure: String,
        #[arg(long, default_value = "reproduce-out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Check a scenario, a feedback file against it, or replay a manifest
    Validate {
        #[arg(long, required_unless_present = "manifest")]
        scenario: Option<PathBuf>,
        /// Feedback JSON to re-verify against the scenario's network
        #[arg(long, requires = "scenario")]
        feedback: Option<PathBuf>,
        /// Manifest to re-execute and compare byte for byte
        #[arg(long, conflicts_with = "scenario")]
        manifest: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        jobs: Option<usize>,
    },
}

/// Failure with the process exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure { code: e.exit_code() as u8, message: e.to_string() }
    }
}

impl From<topopriv::experiments::StageError> for Failure {
    fn from(e: topopriv::experiments::StageError) -> Self {
        Failure { code: e.exit_code() as u8, message: e.to_string() }
    }
}

fn setup_jobs(jobs: Option<usize>) -> Result<Executor, Failure> {
    match jobs {
        Some(0) => Err(Error::Config("--jobs must be at least 1".into()).into()),
        Some(j) => {
            rayon::ThreadPoolBuilder::new()
                .num_threads(j)
                .build_global()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            Ok(if j == 1 { Executor::Sequential } else { Executor::Parallel })
        }
        None => Ok(Executor::Parallel),
    }
}

fn output_dir(explicit: Option<PathBuf>, scenario: &ExperimentScenario) -> PathBuf {
    explicit
        .or_else(|| scenario.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(manifest).expect("manifest serialisation cannot fail");
    std::fs::write(dir.join("manifest.json"), text).map_err(Error::from)?;
    Ok(())
}

fn cmd_design(args: Common) -> Result<(), Failure> {
    let executor = setup_jobs(args.jobs)?;
    let (s, _) = ExperimentScenario::load(&args.scenario, args.seed)?;
    let prepared = design_stage(&s, executor)?;
    let fb = prepared
        .feedback
        .ok_or_else(|| Error::Config(format!("method {} designs no feedback", s.treatment.label())))?;
    let check = validate_feedback(&s.network, &fb)?;
    let mut files = vec![
        ("feedback.json".to_string(), fb.to_json().into_bytes()),
        (
            "verification.json".to_string(),
            serde_json::to_string_pretty(&check).expect("report serialisation cannot fail").into_bytes(),
        ),
    ];
    if let Some(p) = &prepared.protocol {
        files.push(("protocol_log.jsonl".into(), p.log_jsonl().into_bytes()));
    }
    let dir = output_dir(args.out, &s);
    write_files(&dir, &files)?;
    println!(
        "{} feedback written to {} (verification {})",
        fb.method,
        dir.display(),
        if check.passed { "passed" } else { "FAILED" }
    );
    for note in &fb.notes {
        println!("note: {note}");
    }
    Ok(())
}

fn cmd_run(args: Common) -> Result<(), Failure> {
    let started = Instant::now();
    let executor = setup_jobs(args.jobs)?;
    let (s, text) = ExperimentScenario::load(&args.scenario, args.seed)?;
    let artifacts = execute(&s, executor)?;
    let dir = output_dir(args.out, &s);
    write_files(&dir, &artifacts.files)?;
    let path = std::fs::canonicalize(&args.scenario).unwrap_or(args.scenario.clone());
    let manifest = manifest_for(&s, &text, Some(&path), args.seed, &artifacts, started);
    write_manifest(&dir, &manifest)?;
    println!("{} score rows written to {}", artifacts.rows.len(), dir.display());
    Ok(())
}

fn cmd_reproduce(figure: &str, out: PathBuf, seed: Option<u64>, jobs: Option<usize>) -> Result<(), Failure> {
    let started = Instant::now();
    let executor = setup_jobs(jobs)?;
    let figures: Vec<Figure> = if figure == "all" {
        Figure::ALL.to_vec()
    } else {
        vec![figure.parse()?]
    };
    let seed = seed.unwrap_or(DEFAULT_SEED);
    let mut files = Vec::new();
    for f in &figures {
        let csv = reproduce(*f, seed, executor)?;
        files.push((f.file_name(), csv.into_bytes()));
    }
    write_files(&out, &files)?;
    write_manifest(&out, &reproduce_manifest(&figures, seed, &files, started))?;
    for (name, _) in &files {
        println!("wrote {}", out.join(name).display());
    }
    Ok(())
}

fn cmd_validate(
    scenario: Option<PathBuf>,
    feedback: Option<PathBuf>,
    manifest: Option<PathBuf>,
    seed: Option<u64>,
    jobs: Option<usize>,
) -> Result<(), Failure> {
    let executor = setup_jobs(jobs)?;
    if let Some(path) = manifest {
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let m: RunManifest = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("manifest: {e}")))?;
        let mismatched = replay_manifest(&m, executor)?;
        if mismatched.is_empty() {
            println!("manifest reproduced: {} files identical", m.outputs.len());
            return Ok(());
        }
        return Err(Failure {
            code: 4,
            message: format!("outputs differ from the manifest: {}", mismatched.join(", ")),
        });
    }
    let path = scenario.expect("clap enforces scenario or manifest");
    let (s, _) = ExperimentScenario::load(&path, seed)?;
    println!(
        "scenario {} ok: n = {}, method {}, estimator {}, {} horizon(s), {} run(s)",
        s.id,
        s.network.n(),
        s.treatment.label(),
        s.estimator.as_str(),
        s.horizons.len(),
        s.runs
    );
    if let Some(fpath) = feedback {
        let text = std::fs::read_to_string(&fpath)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", fpath.display())))?;
        let fb = FeedbackMatrix::from_json(&text, &s.network)?;
        let check = validate_feedback(&s.network, &fb)?;
        println!("{}", serde_json::to_string_pretty(&check).expect("report serialisation cannot fail"));
        if !check.passed {
            return Err(Failure { code: 3, message: "feedback fails verification".into() });
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Design(args) => cmd_design(args),
        Command::Run(args) => cmd_run(args),
        Command::Reproduce { figure, out, seed, jobs } => cmd_reproduce(&figure, out, seed, jobs),
        Command::Validate { scenario, feedback, manifest, seed, jobs } => {
            cmd_validate(scenario, feedback, manifest, seed, jobs)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
