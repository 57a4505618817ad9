//! File formats, run reports, ablation tables and the command-line front
//! end for [`adaptnav_core`].

pub mod commands;
pub mod config;
pub mod envfile;
pub mod error;
pub mod report;
pub mod runner;
pub mod scanfile;
pub mod table;

use std::path::Path;

pub use config::RunConfig;
pub use error::{AppError, Result};
pub use report::RunReport;

/// Writes `bytes`, creating parent directories.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| AppError::io(path, e))
}
