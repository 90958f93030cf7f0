//! File formats, configuration loading and subcommand drivers for the
//! `chainttt` binary. Everything algorithmic lives in `chainttt-core`.

pub mod artifacts;
pub mod commands;
pub mod config_file;
mod error;

pub use error::{CliError, Result};
