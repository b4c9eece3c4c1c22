use alloc::vec::Vec;

use crate::data::{fit_to_context, tokenize, MCItem, PromptTemplate, Token};
use crate::error::{contract, Error, Result};
use crate::model::CausalLM;
use crate::numerics::ParameterStore;

/// Per-parameter empirical Fisher information, aligned with a model's store.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherDiagonal {
    values: ParameterStore,
    examples: usize,
}

impl FisherDiagonal {
    pub fn new(values: ParameterStore, examples: usize) -> Result<Self> {
        if values.values().any(|v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::Validation("Fisher values must be finite and non-negative".into()));
        }
        Ok(Self { values, examples })
    }

    pub fn values(&self) -> &ParameterStore {
        &self.values
    }

    pub fn examples(&self) -> usize {
        self.examples
    }

    /// Copy with `damping` added to every entry.
    pub fn damped(&self, damping: f64) -> Result<Self> {
        let mut values = self.values.clone();
        for a in values.arrays_mut() {
            a.data_mut().iter_mut().for_each(|v| *v += damping);
        }
        Self::new(values, self.examples)
    }
}

/// The (x, y) token pair used for one item: templated prompt and gold choice.
pub fn fisher_example(model: &CausalLM, item: &MCItem, template: PromptTemplate) -> (Vec<Token>, Vec<Token>) {
    let x = template.prompt_tokens(item);
    let y = tokenize(item.gold().as_bytes(), false, false);
    fit_to_context(&x, &y, model.config().context_length)
}

/// Fᵢ = (1/|D|) Σ_{(x,y)∈D} (∂ log p(y|x; θ_A) / ∂θᵢ)².
///
/// Gradients are taken one example at a time. Items are visited in a
/// canonical content order so the result does not depend on dataset order.
pub fn estimate_fisher(model: &CausalLM, items: &[MCItem], template: PromptTemplate) -> Result<FisherDiagonal> {
    if items.is_empty() {
        return Err(contract("estimate_fisher: empty dataset"));
    }
    for item in items {
        item.validate()?;
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| {
        let (x, y) = (&items[a], &items[b]);
        (&x.question, &x.choices, x.gold_index).cmp(&(&y.question, &y.choices, y.gold_index))
    });
    let mut acc = model.params().zeros_like();
    for index in order {
        let (x, y) = fisher_example(model, &items[index], template);
        let (_, grad) = model.sequence_logprob_grad(&x, &y).map_err(|e| match e {
            Error::NumericOverflow { .. } => Error::FisherItem { index },
            other => other,
        })?;
        if grad.values().any(|v| !v.is_finite()) {
            return Err(Error::FisherItem { index });
        }
        for (a, g) in acc.arrays_mut().iter_mut().zip(grad.arrays()) {
            for (s, &v) in a.data_mut().iter_mut().zip(g.data()) {
                *s += v * v;
            }
        }
    }
    let n = items.len() as f64;
    for a in acc.arrays_mut() {
        a.data_mut().iter_mut().for_each(|v| *v /= n);
    }
    FisherDiagonal::new(acc, items.len())
}
