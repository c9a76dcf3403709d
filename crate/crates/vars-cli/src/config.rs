//! Run configuration: one JSON file drives every subcommand.
//!
//! A config file may be partial at any depth. It is overlaid onto the
//! defaults, so `{"train": {"quantile": 0.8}}` changes one field and keeps
//! the rest. Keys that do not exist in the schema are rejected, all of them
//! reported in one pass.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::fs;
use std::path::Path;
use vars_core::classify::HeadConfig;
use vars_core::error::{Result, VarsError};
use vars_core::interpret::DEFAULT_TAU_SALIENCY;
use vars_core::sweeps::SweepParameter;
use vars_core::train::TrainConfig;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub head: HeadConfig,
    pub data: DataSection,
    pub synth: SynthSection,
    pub explain: ExplainSection,
    pub sweep: SweepSection,
    pub bench: BenchSection,
    /// Output directory; `--out` takes precedence.
    pub out_dir: Option<String>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct DataSection {
    /// Manifest of the records used for pretraining and head fitting.
    pub train_manifest: Option<String>,
    /// Manifest of the held-out records used by eval, explain, and sweep.
    pub eval_manifest: Option<String>,
    /// Checkpoint consumed by fit, eval, explain, and bench.
    pub checkpoint: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SynthSection {
    /// Records generated per demo class (three classes).
    pub records_per_class: usize,
    pub seed: u64,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection {
            records_per_class: 10,
            seed: 42,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExplainSection {
    /// Saliency threshold on rescaled node importance.
    pub tau_saliency: f64,
    /// Cap on the number of salient segments; null keeps them all.
    pub top_k: Option<usize>,
    /// Match-tolerance grid in seconds; null means 0 s to 5 s by 0.25 s.
    pub tolerances: Option<Vec<f64>>,
    /// Tolerance for the overlap (venn) counts.
    pub venn_tolerance_sec: f64,
}

impl Default for ExplainSection {
    fn default() -> Self {
        ExplainSection {
            tau_saliency: DEFAULT_TAU_SALIENCY,
            top_k: None,
            tolerances: None,
            venn_tolerance_sec: 0.5,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepSection {
    pub parameter: SweepParameter,
    /// Grid values; null means the parameter's default grid.
    pub grid: Option<Vec<f64>>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            parameter: SweepParameter::LambdaCl,
            grid: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchSection {
    /// Timing repetitions; the median is reported.
    pub repeats: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        BenchSection { repeats: 5 }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            train: TrainConfig::default(),
            head: HeadConfig::default(),
            data: DataSection::default(),
            synth: SynthSection::default(),
            explain: ExplainSection::default(),
            sweep: SweepSection::default(),
            bench: BenchSection::default(),
            out_dir: None,
        }
    }
}

impl RunConfig {
    /// Collects every problem into one error so a file can be fixed in one
    /// pass.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        push_scoped(&mut problems, "train", self.train.validate());
        push_scoped(&mut problems, "head", self.head.validate());
        if self.synth.records_per_class == 0 {
            problems.push("synth.records_per_class must be positive".into());
        }
        let tau = self.explain.tau_saliency;
        if !(0.0..=1.0).contains(&tau) {
            problems.push(format!("explain.tau_saliency must lie in [0, 1], got {tau}"));
        }
        if let Some(tols) = &self.explain.tolerances {
            if tols.is_empty() {
                problems.push("explain.tolerances must be nonempty when given".into());
            }
            if tols.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
                problems.push("explain.tolerances must all be finite and nonnegative".into());
            }
        }
        let venn = self.explain.venn_tolerance_sec;
        if !(venn.is_finite() && venn >= 0.0) {
            problems.push(format!(
                "explain.venn_tolerance_sec must be finite and nonnegative, got {venn}"
            ));
        }
        if let Some(grid) = &self.sweep.grid {
            if grid.is_empty() {
                problems.push("sweep.grid must be nonempty when given".into());
            }
            if grid.iter().any(|v| !v.is_finite()) {
                problems.push("sweep.grid values must be finite".into());
            }
        }
        if self.bench.repeats < 3 {
            problems.push(format!(
                "bench.repeats must be at least 3, got {}",
                self.bench.repeats
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(VarsError::Config(problems.join("; ")))
        }
    }
}

fn push_scoped(problems: &mut Vec<String>, scope: &str, result: Result<()>) {
    if let Err(err) = result {
        let detail = match err {
            VarsError::Config(msg) => msg,
            other => other.to_string(),
        };
        problems.push(format!("{scope}: {detail}"));
    }
}

/// Reads a config file and overlays it onto the defaults. `None` yields the
/// defaults. Semantic validation is separate ([`RunConfig::validate`]) so
/// command-line overrides can be applied in between.
pub fn load_run_config(path: Option<&Path>) -> Result<RunConfig> {
    let mut merged = serde_json::to_value(RunConfig::default()).expect("defaults serialize");
    if let Some(path) = path {
        let name = path.display().to_string();
        let text = fs::read_to_string(path).map_err(|e| VarsError::io(name.clone(), e))?;
        let user: Value =
            serde_json::from_str(&text).map_err(|e| VarsError::format(name.clone(), e.to_string()))?;
        if !user.is_object() {
            return Err(VarsError::format(name, "config root must be a JSON object"));
        }
        let mut unknown = Vec::new();
        overlay(&mut merged, &user, "", &mut unknown);
        if !unknown.is_empty() {
            return Err(VarsError::Config(format!(
                "unknown keys: {}",
                unknown.join(", ")
            )));
        }
    }
    serde_json::from_value(merged).map_err(|e| VarsError::Config(e.to_string()))
}

/// Overlays `user` onto `merged`. Objects merge key by key; anything else
/// replaces the default. Keys absent from the defaults are collected instead
/// of applied.
fn overlay(merged: &mut Value, user: &Value, path: &str, unknown: &mut Vec<String>) {
    match (merged, user) {
        (Value::Object(base), Value::Object(given)) => {
            for (key, value) in given {
                let child = if path.is_empty() {
                    key.clone()
                } else {
                    format!("{path}.{key}")
                };
                match base.get_mut(key) {
                    Some(slot) => overlay(slot, value, &child, unknown),
                    None => unknown.push(child),
                }
            }
        }
        (slot, value) => *slot = value.clone(),
    }
}

/// Applies `--seed`: one value takes over every stage RNG. Sweeps reuse the
/// training seed per grid point.
pub fn apply_seed_override(config: &mut RunConfig, seed: u64) {
    config.train.seed = seed;
    config.head.seed = seed;
    config.synth.seed = seed;
}

/// Hash of every semantic config field. The output directory is excluded:
/// it changes where artifacts land, never what they contain.
pub fn config_hash(config: &RunConfig) -> String {
    let mut v = serde_json::to_value(config).expect("config serializes");
    v.as_object_mut()
        .expect("config is an object")
        .remove("out_dir");
    let canon = serde_json::to_string(&v).expect("value serializes");
    format!("{:08x}", crc32fast::hash(canon.as_bytes()))
}
