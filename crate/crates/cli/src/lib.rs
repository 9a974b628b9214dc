//! Scenario runner and verification suites for the constrained-dynamics engine.

pub mod error;
pub mod output;
pub mod runner;
pub mod scenario;
pub mod suites;

pub use error::CliError;
pub use runner::{run_scenario, RunOutcome};
pub use scenario::{parse_scenario, ScenarioSpec};
