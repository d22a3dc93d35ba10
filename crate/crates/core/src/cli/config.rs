//! Run configuration (JSON, overridable by flags) and run records.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{ChannelMode, PreprocessSpec};
use crate::error::{Error, Result};
use crate::fit::{default_log_every, TrainConfig};
use crate::inr::{Activation, ModelConfig};

pub const DEFAULT_PRETRAIN_ITERATIONS: usize = 5000;
pub const DEFAULT_FIT_ITERATIONS: usize = 2000;
pub const DEFAULT_SWEEP_BUDGET: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSection {
    pub lr: f64,
    /// `None` picks the command default (pretrain 5000, otherwise 2000).
    pub iterations: Option<usize>,
    /// `None` picks the default cadence for the iteration count.
    pub log_every: Option<usize>,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            lr: TrainConfig::DEFAULT_LR,
            iterations: None,
            log_every: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub manifest: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// Initialization for `fit`: `random`, `encoder:PATH` or `full:PATH`.
    /// Encoder checkpoint for `inverse`.
    pub checkpoint: Option<String>,
    /// Single input image (`fit`, `inverse`, `sweep` test image).
    pub image: Option<PathBuf>,
    /// Ground truth for an already-degraded `inverse` input.
    pub gt: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Denoise,
    Sr,
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "denoise" => Ok(Task::Denoise),
            "sr" => Ok(Task::Sr),
            other => Err(Error::Config(format!(
                "unknown task {other:?} (expected denoise or sr)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InverseSection {
    pub task: Option<Task>,
    pub factor: usize,
    pub peak: Option<f64>,
    pub target_snr_db: Option<f64>,
    /// The input image is already the measurement (no simulated degradation).
    pub observed: bool,
}

impl Default for InverseSection {
    fn default() -> Self {
        Self {
            task: None,
            factor: 4,
            peak: None,
            target_snr_db: None,
            observed: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainSection,
    pub seed: u64,
    pub paths: Paths,
    pub preprocess: PreprocessSpec,
    pub freeze_encoder: bool,
    /// Record wall-clock times in FitLog CSVs. Off makes CSVs reproducible byte for byte.
    pub wall_clock: bool,
    /// Index into the manifest test split when no image path is given.
    pub test_index: usize,
    pub inverse: InverseSection,
    pub k_list: Vec<usize>,
    pub sweep_budget: usize,
    /// Iterations at which `fit` captures per-layer gradient histograms.
    pub histogram_iterations: Vec<usize>,
    pub histogram_bins: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            train: TrainSection::default(),
            seed: 0,
            paths: Paths::default(),
            preprocess: PreprocessSpec::default(),
            freeze_encoder: false,
            wall_clock: true,
            test_index: 0,
            inverse: InverseSection::default(),
            k_list: vec![1, 2, 3, 4, 5],
            sweep_budget: DEFAULT_SWEEP_BUDGET,
            histogram_iterations: Vec::new(),
            histogram_bins: 50,
        }
    }
}

impl RunConfig {
    /// Accepts either a bare config or a run record (its `config` is used).
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        let cfg = match value.get("config") {
            Some(inner) if value.get("command").is_some() => serde_json::from_value(inner.clone())?,
            _ => serde_json::from_value(value)?,
        };
        Ok(cfg)
    }

    pub fn train_config(&self, default_iterations: usize) -> TrainConfig {
        let iterations = self.train.iterations.unwrap_or(default_iterations);
        TrainConfig {
            learning_rate: self.train.lr,
            iterations,
            log_every: self
                .train
                .log_every
                .unwrap_or_else(|| default_log_every(iterations))
                .max(1),
        }
    }

    /// Fills command defaults so the stored snapshot is self-contained.
    pub fn resolved(mut self, default_iterations: usize) -> Self {
        let t = self.train_config(default_iterations);
        self.train.iterations = Some(t.iterations);
        self.train.log_every = Some(t.log_every);
        self.model.out_dim = self.preprocess.channels.channels();
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if !(self.train.lr > 0.0 && self.train.lr.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.train.lr
            )));
        }
        if self.model.in_dim != 2 {
            return Err(Error::Config("image fitting needs in_dim = 2".into()));
        }
        if self.preprocess.size < 2 {
            return Err(Error::Config("--size must be >= 2".into()));
        }
        Ok(())
    }

    pub fn activation_name(&self) -> &'static str {
        match self.model.activation {
            Activation::Sine { .. } => "sine",
            Activation::ReluPosenc { .. } => "relu",
        }
    }

    pub fn channel_mode(&self) -> ChannelMode {
        self.preprocess.channels
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    pub best_iteration: Option<usize>,
    pub best_psnr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub command: String,
    /// Grouping key for `report` (e.g. `siren`, `strainer`, `finetune`).
    pub method: String,
    pub build_id: String,
    pub config: RunConfig,
    /// FitLog CSVs relative to the run directory.
    pub fitlogs: Vec<String>,
    pub summary: Summary,
    pub total_wall_ms: Option<f64>,
}

impl RunRecord {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn build_id() -> String {
    match option_env!("STRAINER_BUILD_ID") {
        Some(id) => id.to_string(),
        None => format!("v{}", env!("CARGO_PKG_VERSION")),
    }
}
