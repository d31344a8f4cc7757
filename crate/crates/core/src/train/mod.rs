//! Training orchestration: stage-1 contrastive pretraining with gradient
//! caching, stage-2 classifier calibration with normalization refresh,
//! the warmup/cosine learning-rate schedule, and the
//! leave-one-content-type-out ablation harness.

mod ablation;
mod config;
mod data;
mod log;
mod loops;
mod schedule;

pub use ablation::{loocv_ablation, AblationOutcome};
pub use config::{OptimSpec, StageKind, TrainConfig};
pub use data::{balanced_batches, image_to_tensor, images_to_batch, ImageStore};
pub use log::{LogRecord, StepEssentials, TrainLog};
pub use loops::{calibrate, pretrain};
pub use schedule::lr_at;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("epoch fraction {value} outside [0, {total}]")]
    OutOfRange { value: f64, total: f64 },
    #[error("invalid train config: {0}")]
    InvalidConfig(String),
    #[error("non-finite loss at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: u64, step: u64 },
    #[error("no usable data: {0}")]
    DataExhausted(String),
    #[error("calibration set is unbalanced: {0}")]
    UnbalancedCalibration(String),
    #[error("insufficient ablation data: {0}")]
    InsufficientData(String),
    #[error("log records out of order: {0}")]
    LogOrder(String),
    #[error("config file: {0}")]
    Toml(String),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    SelfCon(#[from] crate::selfcon::SelfConError),
    #[error(transparent)]
    Image(#[from] crate::imgproc::ImgError),
    #[error(transparent)]
    Manifest(#[from] crate::manifest::ManifestError),
    #[error(transparent)]
    Eval(#[from] crate::eval::EvalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
