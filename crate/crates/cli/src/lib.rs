//! Reproducible experiment driver for discounted Beta-Bernoulli reward
//! estimation: configuration, output formats, posterior snapshots, and the
//! `sweep-lambda`, `sweep-n`, `mc-validate` and `train` commands.

pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
pub mod snapshot;

pub use commands::{apply_overrides, run, Command, Outcome, Overrides, Status};
pub use config::ExperimentConfig;
pub use error::CliError;
pub use snapshot::PosteriorSnapshot;
