//! Scenario configuration, Monte Carlo driver and result files.

pub mod config;
pub mod emit;
pub mod run;
pub mod summary;

pub use config::{DeltaMode, MsType, ScenarioConfig, UserSelection};
pub use emit::{emit, to_csv, Sidecar, CSV_HEADER};
pub use run::{run_scenario, ResultRecord, RunOutput};
