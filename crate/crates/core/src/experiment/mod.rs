//! Configuration-driven experiments: every trial generates a market, draws
//! latent values, computes stable matchings and records their statistics.
//! The summary checks the records against the configured tolerances.

pub mod config;
pub mod runner;
pub mod summary;

pub use config::{ExperimentConfig, ExperimentKind, MarketSpec};
pub use runner::{run_experiment, BoundRecord, RunOutput, TrialRecord};
pub use summary::{build_summary, CheckOutcome, read_records, render_summary, summarize, write_outputs, Summary};
