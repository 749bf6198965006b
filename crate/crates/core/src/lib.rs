//! Multi-view feature selection with a two-stage, multiniche NSGA-II
//! genetic algorithm.
//!
//! The search runs in two stages inside every niche. Intra-view selection
//! evolves binary feature masks for each view independently and keeps six
//! candidate masks per view. Between-view selection then evolves integer
//! chromosomes that pick one candidate (or none) per view. Fitness is the
//! pair (cross-validated balanced error, number of selected features),
//! both minimized.
//!
//! Module map:
//! - [`moo`]: Pareto dominance, non-dominated sorting, crowding, selection.
//! - [`variation`]: chromosome encodings and genetic operators.
//! - [`eval`]: stratified folds, LDA / multinomial logistic regression,
//!   cross-validated fitness.
//! - [`search`]: the two-stage engine, duplicate control and migration.
//! - [`data`]: multi-view datasets, CSV ingestion, synthetic benchmarks and
//!   Monte Carlo oracles.
//! - [`metrics`]: balanced accuracy, AUC, feature-recovery F1.
//! - [`config`]: experiment configuration files and presets.

pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod metrics;
pub mod moo;
pub mod rng;
pub mod search;
pub mod variation;

pub use error::{Error, ErrorKind, Result};

/// Library version string recorded in run metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
