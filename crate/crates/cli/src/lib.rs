//! Scenario runner behind the `qkd` binary.

pub mod config;
pub mod run;

pub use config::{ConfigError, FlagOverrides, Kind, Scenario, ScenarioFile};
pub use run::{run, RunError, CKA_COLUMNS, MDI_COLUMNS};
