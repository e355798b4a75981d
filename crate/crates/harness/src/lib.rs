//! Configuration, experiment pipelines and file output behind the `rspnet`
//! command-line tool.
//!
//! Outputs are CSV files plus an `index.json` listing each file's row count
//! and SHA-256 together with the config hash. Rendering figures is left to
//! an external plotter.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;
pub mod output;

pub use commands::{run, Command};
pub use config::ExperimentConfig;
pub use error::HarnessError;
