//! Library side of the `addfit` command-line tool.

pub mod commands;
pub mod io;
pub mod manifest;

pub use commands::{run, Cli, Outcome};
