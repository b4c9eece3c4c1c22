use alloc::vec::Vec;

use crate::error::{contract, Result};
use crate::numerics::{Graph, ParameterStore, Var};

/// Synaptic-intelligence bookkeeping for one task.
///
/// The path integral `Σ_t Δθᵢ(t) · (−∂L/∂θᵢ)` accumulates per step; at the
/// end of the task it is turned into an importance
/// `Sᵢ = numeratorᵢ / ((θ_end,ᵢ − θᵢ(0))² + ε)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SIState {
    start: ParameterStore,
    numerator: ParameterStore,
    epsilon: f64,
}

impl SIState {
    /// Starts a task at parameters `start`.
    pub fn begin(start: &ParameterStore, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(contract("SI damping must be positive"));
        }
        Ok(Self { start: start.clone(), numerator: start.zeros_like(), epsilon })
    }

    /// Restores a state from its parts (used when resuming from a checkpoint).
    pub fn from_parts(start: ParameterStore, numerator: ParameterStore, epsilon: f64) -> Result<Self> {
        start.check_aligned(&numerator, "SI state")?;
        if !(epsilon > 0.0) {
            return Err(contract("SI damping must be positive"));
        }
        Ok(Self { start, numerator, epsilon })
    }

    pub fn start(&self) -> &ParameterStore {
        &self.start
    }

    pub fn numerator(&self) -> &ParameterStore {
        &self.numerator
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `numeratorᵢ += Δθᵢ · (−gradᵢ)` for one optimizer step.
    pub fn accumulate(&mut self, delta: &ParameterStore, grad: &ParameterStore) -> Result<()> {
        self.numerator.check_aligned(delta, "si_accumulate delta")?;
        self.numerator.check_aligned(grad, "si_accumulate grad")?;
        for ((n, d), g) in self.numerator.arrays_mut().iter_mut().zip(delta.arrays()).zip(grad.arrays()) {
            for ((s, &dv), &gv) in n.data_mut().iter_mut().zip(d.data()).zip(g.data()) {
                *s += dv * (-gv);
            }
        }
        Ok(())
    }

    /// Importance before clamping; may be negative on non-monotone paths.
    pub fn raw_importance(&self, end: &ParameterStore) -> Result<ParameterStore> {
        self.start.check_aligned(end, "si_consolidate")?;
        let mut out = self.numerator.clone();
        for ((o, s), e) in out.arrays_mut().iter_mut().zip(self.start.arrays()).zip(end.arrays()) {
            for ((v, &s0), &e0) in o.data_mut().iter_mut().zip(s.data()).zip(e.data()) {
                *v /= (e0 - s0) * (e0 - s0) + self.epsilon;
            }
        }
        Ok(out)
    }

    /// Importance clamped at zero from below; this is what the penalty uses.
    pub fn consolidate(&self, end: &ParameterStore) -> Result<ParameterStore> {
        let mut s = self.raw_importance(end)?;
        for a in s.arrays_mut() {
            a.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
        }
        Ok(s)
    }
}

/// λ Σᵢ Sᵢ (θᵢ − θ_end,ᵢ)²
pub fn si_penalty(params: &ParameterStore, anchor: &ParameterStore, importance: &ParameterStore, strength: f64) -> Result<f64> {
    let mut total = 0.0;
    for (name, theta) in params.iter() {
        let a = params.matching(anchor, name, "si anchor")?;
        let s = params.matching(importance, name, "si importance")?;
        for ((&t, &a), &w) in theta.data().iter().zip(a.data()).zip(s.data()) {
            total += w * (t - a) * (t - a);
        }
    }
    Ok(strength * total)
}

pub fn si_penalty_graph<'a>(
    g: &mut Graph<'a>,
    vars: &[Var],
    params: &ParameterStore,
    anchor: &'a ParameterStore,
    importance: &'a ParameterStore,
    strength: f64,
) -> Result<Var> {
    let mut terms = Vec::with_capacity(vars.len());
    for (i, name) in params.names().iter().enumerate() {
        let a = params.matching(anchor, name, "si anchor")?;
        let s = params.matching(importance, name, "si importance")?;
        terms.push(g.weighted_sq_dist(vars[i], a.data(), s.data())?);
    }
    let sum = g.sum_all(&terms)?;
    Ok(g.scale(sum, strength))
}
