//! The `statica` command line tool and preview server.
//!
//! `run` is the whole pipeline: render every frame of a family to a PNG
//! stack, mesh the stack and check the model. The other subcommands expose
//! the stages one at a time; `serve` offers the same pipeline over HTTP.

pub mod commands;
pub mod config;
pub mod server;

use thiserror::Error;

pub use commands::{cmd_check, cmd_generate, cmd_mesh, cmd_run, generate_frames};
pub use config::JobConfig;

/// Failure of one pipeline stage. Each stage has its own exit status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("generate: {0}")]
    Generation(String),
    #[error("mesh: {0}")]
    Meshing(String),
    #[error("check: {0}")]
    Validation(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Generation(_) => 2,
            CliError::Meshing(_) => 3,
            CliError::Validation(_) => 4,
        }
    }
}
