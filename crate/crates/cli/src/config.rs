//! The flat run configuration shared by every subcommand.
//!
//! A config file is a single JSON object whose keys are exactly the
//! field names below; unknown keys are rejected so typos fail loudly.
//! Command-line flags override file values field by field, and the
//! merged result is echoed into the run manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::Failure;

/// Every tunable of every subcommand, all optional. Per-command
/// requirements (an auction needs `items`, a transport run needs
/// `instance`, ...) are enforced by the command that consumes them.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    // common
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,

    // auction
    #[serde(skip_serializing_if = "Option::is_none")]
    pub items: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub menu_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs_per_stage: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_start: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_end: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stages: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr_stage_decay: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval_samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub early_stop_min_gain: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub export_grid: Option<usize>,

    // transport
    #[serde(skip_serializing_if = "Option::is_none")]
    pub instance: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sqrt_iters: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step_c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub polish_epochs: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub polish_iters: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,

    // validate
    #[serde(skip_serializing_if = "Option::is_none")]
    pub suite: Option<String>,

    // export-grid
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mechanism: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_axis: Option<usize>,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Failure::Config(format!("cannot read config file {}: {e}", path.display()))
        })?;
        serde_json::from_str(&text).map_err(|e| {
            Failure::Config(format!("config file {}: {e}", path.display()))
        })
    }

    /// Lays `over`'s set fields on top of `self`. Both sides serialize
    /// to objects holding only their set fields, so a plain key-wise
    /// union implements "flags override file values" exactly.
    pub fn overlay(&self, over: &RunConfig) -> Result<RunConfig, Failure> {
        let to_map = |c: &RunConfig| -> Result<serde_json::Map<_, _>, Failure> {
            match serde_json::to_value(c) {
                Ok(serde_json::Value::Object(m)) => Ok(m),
                Ok(_) => unreachable!("a struct serializes to an object"),
                Err(e) => Err(Failure::Config(format!("config merge: {e}"))),
            }
        };
        let mut merged = to_map(self)?;
        merged.extend(to_map(over)?);
        serde_json::from_value(serde_json::Value::Object(merged))
            .map_err(|e| Failure::Config(format!("config merge: {e}")))
    }
}
