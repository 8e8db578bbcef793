//! Persistence and orchestration around `aimdgrid-core`: JSON and CSV
//! formats, content hashes, run manifests, the pipeline stages, and the
//! `aimdgrid` command line.

pub mod cli;
pub mod config;
pub mod error;
pub mod formats;
pub mod hashing;
pub mod manifest;
pub mod pipeline;

pub use error::{CliError, ExitClass};
