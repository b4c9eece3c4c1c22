//! AdamW training with linear warmup, gradient accumulation and
//! continual-learning penalty hooks.

mod adamw;
mod train;

pub use adamw::{adamw_step, OptimState};
pub use train::{train_task, NoHooks, Regularizer, StepRecord, TrainHooks, TrainState};

use crate::error::{contract, Result};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub warmup_ratio: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub grad_accum_steps: usize,
    pub total_steps: u64,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Checkpoint every this many steps; 0 writes only the final checkpoint.
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 2e-4,
            warmup_ratio: 0.05,
            weight_decay: 0.01,
            batch_size: 2,
            grad_accum_steps: 1,
            total_steps: 2000,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.warmup_ratio) {
            return Err(contract("warmup_ratio must lie in [0, 1]"));
        }
        if self.total_steps == 0 {
            return Err(contract("total_steps must be at least 1"));
        }
        if self.batch_size == 0 || self.grad_accum_steps == 0 {
            return Err(contract("batch_size and grad_accum_steps must be at least 1"));
        }
        if !(self.learning_rate >= 0.0) || !(self.weight_decay >= 0.0) {
            return Err(contract("learning_rate and weight_decay must be non-negative"));
        }
        Ok(())
    }

    pub fn warmup_steps(&self) -> u64 {
        libm::ceil(self.warmup_ratio * self.total_steps as f64) as u64
    }
}

/// Linear ramp from 0 to the peak rate over the warmup steps, constant afterwards.
pub fn lr_schedule(step: u64, config: &TrainConfig) -> f64 {
    let warm = config.warmup_steps();
    if warm == 0 || step >= warm {
        config.learning_rate
    } else {
        config.learning_rate * step as f64 / warm as f64
    }
}
