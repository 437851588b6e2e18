//! The `sigverify` command-line tool: synthesize or load signature data,
//! render it, query a vision-language model, score with DTW and evaluate.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;

pub use cli::run_from_args;
pub use config::RunConfig;
pub use error::CliError;
