//! Shared command state: validated config, output directory, overwrite
//! protection, and the run manifest every command leaves behind.

use crate::config::RunConfig;
use serde_json::{json, Value};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;
use vars_core::error::{Result, VarsError};
use vars_core::signal::io::load_dataset;
use vars_core::signal::EcgRecord;
use vars_core::train::{load_checkpoint, Checkpoint, CHECKPOINT_VERSION};

/// Written by every command. Carries wall time, so it is the one artifact
/// exempt from byte-for-byte reproducibility.
pub const RUN_MANIFEST: &str = "run_manifest.json";

pub struct RunContext {
    pub config: RunConfig,
    pub config_hash: String,
    pub out: PathBuf,
    pub force: bool,
}

impl RunContext {
    /// Creates the output directory after checking that none of the named
    /// artifacts would be overwritten without `--force`.
    pub fn prepare_out(&self, artifacts: &[&str]) -> Result<()> {
        for name in artifacts.iter().chain(std::iter::once(&RUN_MANIFEST)) {
            let path = self.out.join(name);
            if path.exists() && !self.force {
                return Err(VarsError::Config(format!(
                    "refusing to overwrite {}; pass --force",
                    path.display()
                )));
            }
        }
        fs::create_dir_all(&self.out)
            .map_err(|e| VarsError::io(self.out.display().to_string(), e))
    }

    pub fn write_text(&self, rel: &str, text: &str) -> Result<()> {
        let path = self.out.join(rel);
        fs::write(&path, text).map_err(|e| VarsError::io(path.display().to_string(), e))
    }

    pub fn write_json(&self, rel: &str, value: &Value) -> Result<()> {
        let text = serde_json::to_string_pretty(value).expect("json serializes");
        self.write_text(rel, &format!("{text}\n"))
    }

    fn require_manifest(&self, which: &str, path: &Option<String>) -> Result<Vec<EcgRecord>> {
        let path = path.as_ref().ok_or_else(|| {
            VarsError::Config(format!("data.{which} is required for this command"))
        })?;
        let records = load_dataset(Path::new(path))?;
        log::info!("loaded {} records from {path}", records.len());
        Ok(records)
    }

    pub fn require_train_records(&self) -> Result<Vec<EcgRecord>> {
        self.require_manifest("train_manifest", &self.config.data.train_manifest)
    }

    pub fn require_eval_records(&self) -> Result<Vec<EcgRecord>> {
        self.require_manifest("eval_manifest", &self.config.data.eval_manifest)
    }

    pub fn require_checkpoint(&self) -> Result<Checkpoint> {
        let path = self.config.data.checkpoint.as_ref().ok_or_else(|| {
            VarsError::Config("data.checkpoint is required for this command".into())
        })?;
        load_checkpoint(Path::new(path))
    }

    pub fn write_run_manifest(
        &self,
        command: &str,
        seed: u64,
        outputs: &[String],
        wall: Duration,
    ) -> Result<()> {
        let manifest = json!({
            "command": command,
            "config_hash": self.config_hash,
            "seed": seed,
            "versions": {
                "core": vars_core::CORE_VERSION,
                "cli": env!("CARGO_PKG_VERSION"),
                "checkpoint_format": CHECKPOINT_VERSION,
            },
            "wall_time_ms": wall.as_millis() as u64,
            "outputs": outputs,
        });
        self.write_json(RUN_MANIFEST, &manifest)
    }
}
