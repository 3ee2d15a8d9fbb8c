//! IO, file formats, and orchestration around [`mubsynth_core`].
//!
//! The numerical core is `no_std`; everything that touches the filesystem or
//! a thread pool lives here: strict TOML run configs, the versioned solution
//! file, CSV emitters for probability tables / QKD sweeps / chip scans, and
//! the parallel multi-start runner backing the `mubsynth` binary.

pub mod config;
pub mod report;
pub mod run;
pub mod solution_file;

pub use mubsynth_core as core;

/// Errors surfaced by the IO layer, tagged with the CLI exit-code contract:
/// 2 = configuration, 3 = output, 4 = solution file.
#[derive(Debug, thiserror::Error)]
pub enum IoLayerError {
    #[error("config error: {0}")]
    Config(String),

    #[error("cannot write {path}: {reason}")]
    Output { path: String, reason: String },

    #[error("solution file error: {0}")]
    SolutionFile(String),

    #[error("{0}")]
    Numeric(#[from] mubsynth_core::Error),
}

impl IoLayerError {
    pub fn exit_code(&self) -> i32 {
        match self {
            IoLayerError::Config(_) => 2,
            IoLayerError::Output { .. } => 3,
            IoLayerError::SolutionFile(_) => 4,
            // numeric failures are argument problems at the CLI boundary
            IoLayerError::Numeric(_) => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, IoLayerError>;
