pub mod diagnose;
pub mod eval;
pub mod fit;
pub mod score;
pub mod synth;

use std::path::{Path, PathBuf};

use crate::config::{CliError, Config};

/// `<out>/models/<detector>`.
pub(crate) fn model_dir(config: &Config, name: &str) -> PathBuf {
    config.out_dir.join("models").join(name)
}

/// `<out>/scores/<detector>__<bank>.csv`.
pub(crate) fn score_path(config: &Config, detector: &str, bank: &str) -> PathBuf {
    config
        .out_dir
        .join("scores")
        .join(format!("{detector}__{bank}.csv"))
}

pub(crate) fn ensure_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|e| {
        CliError::Core(hpm_core::HpmError::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })
}
