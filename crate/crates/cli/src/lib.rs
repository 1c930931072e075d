//! Command-line driver: config loading, the four verbs and their artifacts.

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{run, CliError, Verb};
