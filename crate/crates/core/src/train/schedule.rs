//! Learning-rate schedule: linear warmup from zero to the base rate,
//! then cosine annealing down to zero at the final epoch.

use super::TrainError;

pub fn lr_at(
    epoch_fraction: f64,
    base_lr: f64,
    warmup_epochs: f64,
    total_epochs: f64,
) -> Result<f64, TrainError> {
    if !(0.0..=total_epochs).contains(&epoch_fraction) {
        return Err(TrainError::OutOfRange { value: epoch_fraction, total: total_epochs });
    }
    if epoch_fraction < warmup_epochs {
        return Ok(base_lr * epoch_fraction / warmup_epochs);
    }
    let progress = (epoch_fraction - warmup_epochs) / (total_epochs - warmup_epochs);
    Ok(base_lr * (1.0 + (std::f64::consts::PI * progress).cos()) / 2.0)
}
