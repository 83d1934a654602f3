//! File formats, reports and the `dish` command line over `dish-core`.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod csv_io;
pub mod error;
pub mod report;
pub mod spec_file;

pub use config::{Overrides, RunConfig};
pub use error::{Category, CliError};
