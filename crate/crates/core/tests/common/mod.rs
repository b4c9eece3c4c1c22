#![allow(dead_code)]

use ewcl_core::data::{tokenize, Corpus, MCItem, Token};
use ewcl_core::model::{CausalLM, ModelConfig};
use ewcl_core::numerics::ParameterStore;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn config(n_layers: usize, d_model: usize, context_length: usize, seed: u64) -> ModelConfig {
    ModelConfig { n_layers, d_model, n_heads: 2, context_length, seed, ..ModelConfig::default() }
}

pub fn model(n_layers: usize, d_model: usize, context_length: usize, seed: u64) -> CausalLM {
    CausalLM::new(config(n_layers, d_model, context_length, seed)).unwrap()
}

/// Every parameter drawn uniformly from [-scale, scale].
pub fn randomize(model: &mut CausalLM, scale: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for a in model.params_mut().arrays_mut() {
        a.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-scale..scale));
    }
}

/// A copy of `store` with every entry drawn from `[lo, hi)`.
pub fn random_like(store: &ParameterStore, lo: f64, hi: f64, seed: u64) -> ParameterStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = store.zeros_like();
    for a in out.arrays_mut() {
        a.data_mut().iter_mut().for_each(|v| *v = rng.random_range(lo..hi));
    }
    out
}

/// `store + noise`, noise uniform in [-scale, scale].
pub fn perturbed(store: &ParameterStore, scale: f64, seed: u64) -> ParameterStore {
    let noise = random_like(store, -scale, scale, seed);
    let mut out = store.clone();
    for (a, n) in out.arrays_mut().iter_mut().zip(noise.arrays()) {
        a.data_mut().iter_mut().zip(n.data()).for_each(|(x, d)| *x += d);
    }
    out
}

pub fn seq(text: &str) -> Vec<Token> {
    tokenize(text.as_bytes(), true, true)
}

pub fn toy_corpus() -> Corpus {
    let docs = (0..8).map(|i| format!("abcabcabc {i} abcabc abc abc.").into_bytes()).collect();
    Corpus::new("toy", "toy", docs).unwrap()
}

pub fn item(question: &str, choices: &[&str], gold: usize) -> MCItem {
    MCItem { question: question.into(), choices: choices.iter().map(|c| c.to_string()).collect(), gold_index: gold }
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

pub fn max_rel_diff(a: &ParameterStore, b: &ParameterStore) -> f64 {
    let scale = b.values().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    a.values().zip(b.values()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}
