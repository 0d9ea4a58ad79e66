//! Scenario harness: configuration, adversary injection, the runner that
//! wires actors to the ledger, reports, traces, and the failure matrix.

pub mod adversary;
pub mod config;
pub mod matrix;
pub mod report;
pub mod runner;
pub mod trace;

pub use adversary::{AdversarySpec, TamperField};
pub use config::{ConfigError, Expectation, ScenarioConfig};
pub use matrix::{expected_matrix, run_matrix, MatrixCell, MatrixReport};
pub use report::{ScenarioOutcome, ScenarioReport};
pub use runner::run;
pub use trace::{diff_traces, read_trace, write_trace, TraceBlock, TraceError};
