//! Command-line front end: argument grammar, file conventions, the strategy
//! comparison report and the SVG overlay renderer.

pub mod args;
pub mod commands;
pub mod compare;
pub mod config;
pub mod files;
pub mod render;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("no ground truth for `{0}`")]
    MissingPair(String),
    #[error("unknown strategy `{0}`")]
    StrategyUnknown(String),
    #[error("{0}")]
    Usage(String),
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_IO: i32 = 2;

/// I/O failures anywhere in the chain map to 2, everything else to 1.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.chain().any(|e| e.downcast_ref::<std::io::Error>().is_some()) {
        EXIT_IO
    } else {
        EXIT_VALIDATION
    }
}
