//! Federated training simulator around the private robust aggregation
//! protocol: datasets, partitioning, a logistic-regression model, the
//! training loop, reporting and the self-test suite.

pub mod config;
pub mod data;
pub mod error;
pub mod experiment;
pub mod model;
pub mod partition;
pub mod report;
pub mod selftest;

pub use config::{ExperimentConfig, RuleVariant};
pub use error::{HarnessError, Result};
pub use experiment::{run_experiment, ExperimentOutput, MetricsRow, RunOptions, RunResult};
