//! Feedback designs that keep a consensus network's topology from being
//! identified by an observer of its node states, plus the estimators used
//! to measure how much of the topology leaks.

pub mod adversary;
pub mod design;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod format;
pub mod graph;
pub mod linalg;

pub use error::{Error, Result};
