//! Command-line front end for the MCEL library: configuration, reports and subcommands.

pub mod commands;
pub mod config;
pub mod report;
