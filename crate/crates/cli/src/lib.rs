//! Scenario files, runners and CSV output for the `probe-cli` binary.

pub mod output;
pub mod run;
pub mod scenario;

pub use scenario::{parse_scenario, ConfigError, Scenario, ScenarioKind};
