//! Experiment configs, synthetic data, the run grid and reports.

pub mod config;
pub mod experiment;
pub mod report;
pub mod synth;

pub use config::{AnswerConfig, DatasetConfig, ExperimentConfig, PbaVotes, SynthSpec, VoteConfig, SCHEMA_VERSION};
pub use experiment::{load_store, persist, run_experiment, CellResult, ResultStore, SummaryRow};
pub use report::{build_report, default_pairings, emit_report, parse_pairings, Pairing, Report, ReportRow};
pub use synth::SynthKind;
