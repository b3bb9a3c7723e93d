//! File formats and table emission for the command-line tool.

pub mod config;
pub mod dataset;
pub mod families;
pub mod report;
pub mod synthetic;
pub mod tables;

use std::path::Path;

use crate::error::{Error, Result};

pub use config::RunConfig;
pub use dataset::{load_dataset, parse_dataset, write_dataset, DATASET_TAG};
pub use report::{FitReport, REPORT_TAG};

/// Fixed scientific notation with nine significant digits.
pub fn sci(v: f64) -> String {
    format!("{v:.8e}")
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}
