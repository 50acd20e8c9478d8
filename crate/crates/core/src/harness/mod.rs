//! Drivers behind the `hype` binary: config parsing, the verification
//! suites, bias dumps and the storage benchmark.

pub mod bench;
pub mod config;
pub mod dump;
pub mod verify;

use thiserror::Error;

pub use bench::{run_bench, BenchReport};
pub use config::{MuSpec, RunConfig, Tolerances};
pub use dump::{bias_dump, parse_csv, parse_json, DumpFormat};
pub use verify::{run_verify, VerifyReport};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),

    #[error("refused: {0}")]
    Refused(String),

    #[error(transparent)]
    Numeric(#[from] crate::Error),

    #[error("check failed: {0}")]
    Failed(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl HarnessError {
    /// Process exit status: 2 for usage/config problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Refused(_) => 2,
            _ => 1,
        }
    }
}
