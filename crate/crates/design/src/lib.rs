//! File formats, parallel drivers, the design loop, the solver benchmark
//! and the command-line front end built on `lattice-design-core`.

pub mod benchmark;
pub mod config;
pub mod io;
pub mod parallel;
pub mod pipeline;

pub use config::DesignConfig;
pub use pipeline::{run_design, run_design_with, DesignReport, RunOptions, RunStatus, Workspace};
