use alloc::format;
use alloc::vec::Vec;

use super::FisherDiagonal;
use crate::error::{shape, Result};
use crate::model::CausalLM;
use crate::numerics::{Graph, ParameterStore, Var};

/// Frozen copy of the model at the end of a task: the anchor θ_A and, for
/// distillation, the teacher f_A.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSnapshot {
    model: CausalLM,
}

impl TaskSnapshot {
    pub fn capture(model: &CausalLM) -> Self {
        Self { model: model.clone() }
    }

    pub fn anchor(&self) -> &ParameterStore {
        self.model.params()
    }

    pub fn teacher(&self) -> &CausalLM {
        &self.model
    }
}

/// (λ/2) Σᵢ Fᵢ (θᵢ − θ_A,ᵢ)², matched by parameter name.
pub fn ewc_penalty(params: &ParameterStore, snapshot: &TaskSnapshot, fisher: &FisherDiagonal, strength: f64) -> Result<f64> {
    if params.len() != snapshot.anchor().len() || params.len() != fisher.values().len() {
        return Err(shape("ewc_penalty: stores differ in size"));
    }
    let mut total = 0.0;
    for (name, theta) in params.iter() {
        let anchor = params.matching(snapshot.anchor(), name, "ewc anchor")?;
        let f = params.matching(fisher.values(), name, "ewc fisher")?;
        for ((&t, &a), &w) in theta.data().iter().zip(anchor.data()).zip(f.data()) {
            total += w * (t - a) * (t - a);
        }
    }
    Ok(0.5 * strength * total)
}

/// Differentiable form of [`ewc_penalty`] over parameter leaves bound in store order.
pub fn ewc_penalty_graph<'a>(
    g: &mut Graph<'a>,
    vars: &[Var],
    params: &ParameterStore,
    snapshot: &'a TaskSnapshot,
    fisher: &'a FisherDiagonal,
    strength: f64,
) -> Result<Var> {
    if vars.len() != params.len() || params.len() != fisher.values().len() || params.len() != snapshot.anchor().len() {
        return Err(shape(format!("ewc_penalty: {} leaves for {} parameters", vars.len(), params.len())));
    }
    let mut terms = Vec::with_capacity(vars.len());
    for (i, name) in params.names().iter().enumerate() {
        let anchor = params.matching(snapshot.anchor(), name, "ewc anchor")?;
        let f = params.matching(fisher.values(), name, "ewc fisher")?;
        terms.push(g.weighted_sq_dist(vars[i], anchor.data(), f.data())?);
    }
    let sum = g.sum_all(&terms)?;
    Ok(g.scale(sum, 0.5 * strength))
}
