//! Scenario-driven front end for `nonholo-core`.

use thiserror::Error;

pub mod output;
pub mod run;
pub mod scenario;

pub use output::{trajectory_csv, Line, Report};
pub use run::{geometry_report, run_scenario, Artifacts, Overrides};
pub use scenario::Scenario;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_TOLERANCE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    /// Unparseable or invalid scenario, unknown names, I/O trouble.
    #[error("input error: {0}")]
    Input(String),
    #[error("numeric error: {0}")]
    Numeric(nonholo_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Numeric(_) => EXIT_NUMERIC,
        }
    }
}

impl From<nonholo_core::Error> for CliError {
    fn from(e: nonholo_core::Error) -> Self {
        use nonholo_core::Error as E;
        match e {
            E::Dimension(_) | E::InvalidArgument(_) | E::Precondition(_) => CliError::Input(e.to_string()),
            other => CliError::Numeric(other),
        }
    }
}
