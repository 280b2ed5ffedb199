use std::f64::consts::PI;

use super::TrainConfig;
use crate::error::{Error, Result};

/// Number of linear warmup steps for a run of `total_steps`.
pub fn warmup_steps(total_steps: usize, config: &TrainConfig) -> usize {
    (config.warmup_fraction * total_steps as f64).floor() as usize
}

/// Learning rate at `step`: linear warmup from 0 to `base_lr`, then a
/// half-cosine from `base_lr` that reaches 0 on the final step.
pub fn lr_at(step: usize, total_steps: usize, config: &TrainConfig) -> Result<f64> {
    if step >= total_steps {
        return Err(Error::Domain(format!("step {step} outside 0..{total_steps}")));
    }
    let warm = warmup_steps(total_steps, config);
    if step < warm {
        return Ok(config.base_lr * step as f64 / warm as f64);
    }
    let span = (total_steps - warm).saturating_sub(1);
    if span == 0 {
        return Ok(config.base_lr);
    }
    let progress = (step - warm) as f64 / span as f64;
    Ok(config.base_lr * 0.5 * (1.0 + (PI * progress).cos()))
}
