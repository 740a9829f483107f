//! Library side of the `tdip` command: run configuration, subcommands and
//! exit-code mapping.

pub mod commands;
pub mod config;
pub mod error;
