//! Command-line orchestration for PAC robustness verification: configuration,
//! subcommands and report documents.

pub mod cli;
pub mod commands;
pub mod config;
pub mod predictors;
pub mod protocol_check;
pub mod report;
