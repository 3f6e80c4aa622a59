//! The per-invocation output directory.

use std::path::{Path, PathBuf};

use crate::config::LoadedConfig;
use crate::error::{CliError, CliResult};

/// Directory holding every artifact of one experiment.
///
/// Several commands may share one directory (`train`, then `evaluate` with
/// the same `--run-dir`), so each records its own resolved config as
/// `<command>.config.toml` and `<command>.fingerprint.txt`.
#[derive(Debug, Clone)]
pub struct RunDir {
    pub path: PathBuf,
}

impl RunDir {
    /// `<output_dir>/<UTC timestamp>-<fingerprint prefix>`, or `explicit`
    /// when given.
    pub fn create(loaded: &LoadedConfig, explicit: Option<&Path>, command: &str) -> CliResult<Self> {
        let path = match explicit {
            Some(p) => p.to_path_buf(),
            None => {
                let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%S");
                loaded
                    .config
                    .output_dir
                    .join(format!("{stamp}-{}", loaded.short_fingerprint()))
            }
        };
        std::fs::create_dir_all(&path)
            .map_err(|e| CliError::internal(format!("cannot create {}: {e}", path.display())))?;
        let dir = Self { path };
        dir.record(loaded, command)?;
        Ok(dir)
    }

    pub fn record(&self, loaded: &LoadedConfig, command: &str) -> CliResult<()> {
        std::fs::write(self.join(format!("{command}.fingerprint.txt")), format!("{}\n", loaded.fingerprint))?;
        std::fs::write(self.join(format!("{command}.config.toml")), loaded.config.to_toml()?)?;
        Ok(())
    }

    pub fn join(&self, name: impl AsRef<Path>) -> PathBuf {
        self.path.join(name)
    }
}
