//! Run configuration: one structured TOML file fully describes a
//! training run.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::model::ModelConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageKind {
    Pretrain,
    Calibrate,
    Ablation,
}

/// Optimizer hyperparameters. Pretraining reads `momentum`; calibration
/// reads `lr`, `weight_decay`, `beta1`, `beta2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimSpec {
    pub momentum: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl Default for OptimSpec {
    fn default() -> Self {
        OptimSpec {
            momentum: 0.9,
            lr: 1e-4,
            weight_decay: 1e-3,
            beta1: 0.9,
            beta2: 0.99,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossSpec {
    pub temperature: f64,
    pub detection_weight: f64,
    pub generator_weight: f64,
}

impl Default for LossSpec {
    fn default() -> Self {
        LossSpec {
            temperature: 0.07,
            detection_weight: 1.0,
            generator_weight: 1.0,
        }
    }
}

impl LossSpec {
    pub fn to_loss_config(&self) -> crate::selfcon::LossConfig {
        crate::selfcon::LossConfig {
            temperature: self.temperature,
            track_weights: (self.detection_weight, self.generator_weight),
        }
    }
}

/// Ablation extras: evaluation sample cap per content type (records are
/// drawn from the manifest's test split).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationSpec {
    pub eval_per_type: usize,
}

impl Default for AblationSpec {
    fn default() -> Self {
        AblationSpec { eval_per_type: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub stage: StageKind,
    pub seed: u64,
    pub epochs: u64,
    pub batch_size: usize,
    /// Gradient-cache chunk size; clamped to the batch size.
    pub chunk_size: usize,
    pub base_lr: f64,
    pub warmup_epochs: u64,
    /// Manifest path (train/test for pretrain and ablation, calibration
    /// sample for calibrate).
    pub manifest: String,
    /// Root prefix for relative record paths.
    #[serde(default)]
    pub data_root: Option<String>,
    pub checkpoint_out: String,
    /// Pretrained checkpoint consumed by the calibrate stage.
    #[serde(default)]
    pub checkpoint_in: Option<String>,
    #[serde(default)]
    pub log_out: Option<String>,
    /// Resume pretraining from this checkpoint's next epoch.
    #[serde(default)]
    pub resume_from: Option<String>,
    /// Stop after this many epochs even if `epochs` is larger; the
    /// checkpoint then records where to resume.
    #[serde(default)]
    pub stop_after_epoch: Option<u64>,
    #[serde(default)]
    pub optim: OptimSpec,
    #[serde(default)]
    pub loss: LossSpec,
    pub model: ModelConfig,
    #[serde(default)]
    pub ablation: AblationSpec,
}

impl TrainConfig {
    /// Desk-scale defaults around a manifest path; callers override what
    /// they need.
    pub fn desk(stage: StageKind, manifest: impl Into<String>, seed: u64) -> Self {
        TrainConfig {
            stage,
            seed,
            epochs: match stage {
                StageKind::Calibrate => 5,
                _ => 20,
            },
            batch_size: 40,
            chunk_size: 20,
            base_lr: 0.02,
            warmup_epochs: 2,
            manifest: manifest.into(),
            data_root: None,
            checkpoint_out: String::new(),
            checkpoint_in: None,
            log_out: None,
            resume_from: None,
            stop_after_epoch: None,
            optim: OptimSpec::default(),
            loss: LossSpec::default(),
            model: ModelConfig::small(seed),
            ablation: AblationSpec::default(),
        }
    }

    /// The published full-scale stage-1 recipe over a 50-layer backbone.
    pub fn full_scale_pretrain(manifest: impl Into<String>, seed: u64) -> Self {
        TrainConfig {
            epochs: 400,
            batch_size: 200,
            chunk_size: 20,
            base_lr: 0.005,
            warmup_epochs: 10,
            model: ModelConfig::resnet50(seed),
            ..Self::desk(StageKind::Pretrain, manifest, seed)
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs < 1 {
            return Err(TrainError::InvalidConfig("epochs must be at least 1".into()));
        }
        if self.batch_size < 2 {
            return Err(TrainError::InvalidConfig("batch size must be at least 2".into()));
        }
        if !(self.base_lr > 0.0) {
            return Err(TrainError::InvalidConfig("base_lr must be positive".into()));
        }
        if self.warmup_epochs >= self.epochs {
            return Err(TrainError::InvalidConfig(
                "warmup_epochs must be smaller than epochs".into(),
            ));
        }
        if self.chunk_size == 0 {
            return Err(TrainError::InvalidConfig("chunk_size must be positive".into()));
        }
        self.model.validate()?;
        Ok(())
    }

    pub fn lr_at(&self, epoch_fraction: f64) -> Result<f64, TrainError> {
        super::schedule::lr_at(
            epoch_fraction,
            self.base_lr,
            self.warmup_epochs as f64,
            self.epochs as f64,
        )
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self, TrainError> {
        toml::from_str(text).map_err(|e| TrainError::Toml(e.to_string()))
    }

    pub fn from_toml_file(path: impl AsRef<Path>) -> Result<Self, TrainError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Resolve a record path against the configured data root.
    pub fn resolve_path(&self, record_path: &str) -> String {
        match (&self.data_root, Path::new(record_path).is_absolute()) {
            (Some(root), false) => Path::new(root).join(record_path).to_string_lossy().into_owned(),
            _ => record_path.to_string(),
        }
    }
}
