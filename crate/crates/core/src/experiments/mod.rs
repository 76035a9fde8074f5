//! Scenario files, the scoring pipeline and the reproduction harness.

pub mod reproduce;
pub mod run;
pub mod scenario;
pub mod surrogate;

pub use reproduce::Figure;
pub use run::{execute, RunManifest, ScoreRow, Stage, StageError};
pub use scenario::{Estimator, ExperimentScenario, Treatment};
