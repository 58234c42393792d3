//! Configuration, initial conditions, experiment drivers and output
//! formats for the `nlac` command line tool.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod drivers;
pub mod error;
pub mod initial;
pub mod output;
pub mod selftest;

pub use config::ExperimentConfig;
pub use drivers::{run_experiment, write_report, Report};
pub use error::{HarnessError, Result};
pub use initial::initial_condition;
