//! Continual-learning regularizers and importance estimators.

mod ewc;
mod fisher;
mod lwf;
mod si;

pub use ewc::{ewc_penalty, ewc_penalty_graph, TaskSnapshot};
pub use fisher::{estimate_fisher, fisher_example, FisherDiagonal};
pub use lwf::{lwf_penalty, lwf_penalty_graph};
pub use si::{si_penalty, si_penalty_graph, SIState};

use crate::error::{contract, Result};

/// Which regularizer is active during the next task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum RegularizerKind {
    None,
    #[default]
    Ewc,
    Si,
    Lwf,
}

impl RegularizerKind {
    pub fn name(self) -> &'static str {
        match self {
            RegularizerKind::None => "none",
            RegularizerKind::Ewc => "ewc",
            RegularizerKind::Si => "si",
            RegularizerKind::Lwf => "lwf",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct RegularizerSpec {
    pub kind: RegularizerKind,
    pub strength: f64,
    /// SI damping.
    pub epsilon: f64,
    /// Added to every Fisher entry before use; 0 keeps zero-Fisher parameters fully plastic.
    pub fisher_damping: f64,
    pub lwf_temperature: f64,
    /// Per-task learning-rate decay factor.
    pub lr_decay_gamma: f64,
    pub lr_min: f64,
}

impl Default for RegularizerSpec {
    fn default() -> Self {
        Self { kind: RegularizerKind::Ewc, strength: 0.0, epsilon: 1e-3, fisher_damping: 0.0, lwf_temperature: 1.0, lr_decay_gamma: 1.0, lr_min: 0.0 }
    }
}

impl RegularizerSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.strength >= 0.0) || !self.strength.is_finite() {
            return Err(contract("regularization strength must be finite and non-negative"));
        }
        if !(self.epsilon > 0.0) {
            return Err(contract("SI damping must be positive"));
        }
        if !(self.fisher_damping >= 0.0) || !self.fisher_damping.is_finite() {
            return Err(contract("Fisher damping must be finite and non-negative"));
        }
        if !(self.lwf_temperature > 0.0) {
            return Err(contract("LwF temperature must be positive"));
        }
        if !(self.lr_decay_gamma > 0.0 && self.lr_decay_gamma <= 1.0) {
            return Err(contract("lr decay gamma must lie in (0, 1]"));
        }
        if !(self.lr_min >= 0.0) {
            return Err(contract("lr_min must be non-negative"));
        }
        Ok(())
    }
}

/// Learning rate for the next task: `max(lr_min, lr_prev · γ)`.
pub fn lr_decay(lr_prev: f64, gamma: f64, lr_min: f64) -> f64 {
    (lr_prev * gamma).max(lr_min)
}

/// Sum of the task loss and penalty values.
pub fn total_loss(task_loss: f64, penalties: &[f64]) -> f64 {
    penalties.iter().fold(task_loss, |acc, p| acc + p)
}
