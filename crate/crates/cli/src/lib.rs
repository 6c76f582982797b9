//! Scenario loading, table export and the verification pipeline behind the
//! `delayou` binary.

pub mod scenario;
pub mod stability;
pub mod tables;
pub mod verify;

pub use scenario::{load_scenario, parse_scenario, Scenario, ScenarioErrors};
pub use verify::{run_verify, Report};
