//! Orchestration behind the `qkl` binary: configuration, the pipeline stages
//! and their file outputs.

pub mod commands;
pub mod config;
pub mod export;

use std::fmt;
use std::path::PathBuf;

pub use commands::{run, Outcome, Stage};
pub use config::RunConfig;

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const IO: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const NUMERICAL: i32 = 3;
    pub const VERIFICATION: i32 = 4;
}

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Engine(qkl_core::Error),
    Io(PathBuf, std::io::Error),
    Verification { failed: usize },
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => exit::CONFIG,
            Failure::Engine(e) if e.is_numerical() => exit::NUMERICAL,
            Failure::Engine(_) => exit::CONFIG,
            Failure::Io(..) => exit::IO,
            Failure::Verification { .. } => exit::VERIFICATION,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(msg) => write!(f, "configuration error: {msg}"),
            Failure::Engine(e) if e.is_numerical() => write!(f, "numerical failure: {e}"),
            Failure::Engine(e) => write!(f, "invalid model input: {e}"),
            Failure::Io(path, e) => write!(f, "{}: {e}", path.display()),
            Failure::Verification { failed } => write!(f, "{failed} verification check(s) failed"),
        }
    }
}

impl std::error::Error for Failure {}

impl From<qkl_core::Error> for Failure {
    fn from(e: qkl_core::Error) -> Self {
        Failure::Engine(e)
    }
}
