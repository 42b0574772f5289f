//! File formats, configuration and subcommands around [`ssvmr_core`].

#![warn(rust_2018_idioms, unused_qualifications)]

pub mod bank;
pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod report;

pub use error::{CliError, Result};
pub use ssvmr_core as core;
