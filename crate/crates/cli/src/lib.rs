//! Scenario runner behind the `slowread` binary.

pub mod run;
pub mod scenario;

pub use run::{run_scenario, simulate, RunError, Simulated};
pub use scenario::{parse_scenario, parse_scenario_str, Scenario, ScenarioError};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const INVALID: i32 = 2;
    pub const IO: i32 = 3;
}
