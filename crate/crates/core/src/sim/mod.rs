//! Monte Carlo study of the estimators on a simulated double-sampling design.

mod config;
mod generate;
mod output;
mod run;

pub use config::{ModelScenario, ScenarioConfig, COVARIATE};
pub use generate::{generate_dataset, replication_rng, SimulatedData};
pub use output::{write_errors_csv, write_grid_csv, write_replications_csv, write_summary_json};
pub use run::{
    estimand_label, run_grid, run_replication, run_scenario, EstimatorSummary, GridRow, GridRun, MCSummary,
    ReplicationRow, ScenarioRun, SCHEMA_VERSION,
};
