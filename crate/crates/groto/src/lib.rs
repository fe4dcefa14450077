//! File formats, run configuration, reports and the command-line driver
//! for `groto-core`.

pub mod config;
pub mod error;
pub mod formats;
pub mod report;
pub mod workflow;

pub use error::{Error, Result};
