//! Heterogeneous structure learning for ordinal survey data.
//!
//! The pipeline: embed ordinal items as Gaussian scores, discover latent
//! respondent clusters with a truncated stick-breaking mixture whose
//! components are sparse linear-Gaussian DAGs, select the cluster count by
//! inner cross-validation, and refit a fixed-K confirmatory model. Ships
//! with baselines, a tiered synthetic benchmark, recovery metrics, and
//! bootstrap/sensitivity harnesses.

pub mod benchmark;
pub mod cli;
pub mod dag;
pub mod embedding;
pub mod error;
pub mod ingest;
pub mod math;
pub mod metrics;
pub mod mixture;
pub mod selection;
pub mod stability;
pub mod seeding;

pub use cli::run_cli;
pub use error::{Error, Result};
