//! Experiment harness: configuration, sweeps, result files and the M/M/1 check.

pub mod alloc_io;
pub mod config;
pub mod error;
pub mod experiment;
pub mod mm1;

pub use alloc_io::{dump_allocation, load_allocation, AllocationFile};
pub use config::ExperimentConfig;
pub use error::{HarnessError, Result};
pub use experiment::{recompute_utility, run_experiment, run_solve, ExperimentSummary, ResultRecord};
pub use mm1::{validate_mm1, Mm1Report};
