//! Scenario files in, result tables out.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod run;
pub mod table;

pub use config::{parse_scenario, ConfigErrors, ConfigIssue, Kind, ScenarioConfig};
pub use run::{run_scenario, RunError};
pub use table::{format_float, parse_csv, read_csv, write_results, CsvError, ResultTable};

/// Process exit codes of the `sfdvi` binary.
pub mod exit {
    pub const OK: i32 = 0;
    pub const IO: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const NUMERIC: i32 = 3;
}
