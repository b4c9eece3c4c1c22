use crate::error::{Error, Result};
use crate::numerics::ParameterStore;

use super::TrainConfig;

/// First/second moment estimates and the update counter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    pub m: ParameterStore,
    pub v: ParameterStore,
    pub step: u64,
}

impl OptimState {
    pub fn new(params: &ParameterStore) -> Self {
        Self { m: params.zeros_like(), v: params.zeros_like(), step: 0 }
    }
}

/// One AdamW update with decoupled weight decay.
///
/// `decay[i]` says whether array `i` of the store is decayed. Decay shrinks
/// θ by `lr · wd · θ` before the bias-corrected adaptive step.
pub fn adamw_step(
    params: &mut ParameterStore,
    grads: &ParameterStore,
    state: &mut OptimState,
    lr: f64,
    config: &TrainConfig,
    decay: &[bool],
) -> Result<()> {
    params.check_aligned(grads, "adamw_step")?;
    let step = state.step + 1;
    if grads.values().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient { step });
    }
    let (b1, b2) = (config.beta1, config.beta2);
    let bc1 = 1.0 - libm::pow(b1, step as f64);
    let bc2 = 1.0 - libm::pow(b2, step as f64);
    for (i, ((p, g), (m, v))) in params
        .arrays_mut()
        .iter_mut()
        .zip(grads.arrays())
        .zip(state.m.arrays_mut().iter_mut().zip(state.v.arrays_mut().iter_mut()))
        .enumerate()
    {
        let wd = if decay.get(i).copied().unwrap_or(false) { config.weight_decay } else { 0.0 };
        for (((p, &g), m), v) in p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut()) {
            if wd != 0.0 {
                *p -= lr * wd * *p;
            }
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let mh = *m / bc1;
            let vh = *v / bc2;
            *p -= lr * mh / (libm::sqrt(vh) + config.eps);
        }
    }
    state.step = step;
    Ok(())
}
