//! Configuration, orchestration and output for kgscatter experiments.

use std::io;
use std::path::PathBuf;

pub mod config;
pub mod experiments;
pub mod output;

pub use config::{parse_config, parse_config_str, Command, ExperimentSpec};
pub use experiments::run_experiment;
pub use output::Manifest;

fn at_line(line: &Option<usize>) -> String {
    line.map(|l| format!(" at line {l}")).unwrap_or_default()
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config parse error{}: {message}", at_line(.line))]
    Parse { line: Option<usize>, message: String },
    #[error("invalid `{field}`: {reason}")]
    Validation { field: String, reason: String },
    #[error(transparent)]
    Core(#[from] kgscatter_core::Error),
    #[error("{}: {source}", .path.display())]
    Io { path: PathBuf, source: io::Error },
}

impl CliError {
    /// 1 for bad input, 2 for failures while computing or writing.
    pub fn exit_code(&self) -> i32 {
        use kgscatter_core::Error as E;
        match self {
            CliError::Parse { .. } | CliError::Validation { .. } => 1,
            CliError::Core(E::InvalidParameter { .. } | E::Superluminal { .. } | E::SupportClipped { .. } | E::Wraparound { .. }) => 1,
            CliError::Core(_) | CliError::Io { .. } => 2,
        }
    }
}
