//! Byte-level decoder-only transformer.
//!
//! Pre-norm blocks with learned positional embeddings and an untied output
//! head. All parameters live in a [`ParameterStore`] whose layout is a pure
//! function of [`ModelConfig`].

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{Token, EOS, PAD, VOCAB_SIZE};
use crate::error::{contract, Result};
use crate::numerics::{DenseArray, Graph, ParameterStore, Var};

const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct ModelConfig {
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub context_length: usize,
    pub vocab_size: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { n_layers: 2, d_model: 128, n_heads: 4, context_length: 256, vocab_size: VOCAB_SIZE, seed: 0 }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_heads == 0 || self.d_model == 0 || self.d_model % self.n_heads != 0 {
            return Err(contract(format!("d_model {} must be a positive multiple of n_heads {}", self.d_model, self.n_heads)));
        }
        if self.context_length < 2 {
            return Err(contract("context_length must be at least 2"));
        }
        if self.vocab_size != VOCAB_SIZE {
            return Err(contract(format!("vocab_size is fixed at {VOCAB_SIZE}")));
        }
        Ok(())
    }

    /// Names and shapes in store order.
    pub fn layout(&self) -> Vec<(alloc::string::String, Vec<usize>)> {
        let (d, v, l) = (self.d_model, self.vocab_size, self.context_length);
        let mut out = vec![("tok_emb".into(), vec![v, d]), ("pos_emb".into(), vec![l, d])];
        for i in 0..self.n_layers {
            let p = |s: &str| format!("blocks.{i}.{s}");
            out.extend([
                (p("ln1.gain"), vec![d]),
                (p("ln1.bias"), vec![d]),
                (p("attn.qkv.weight"), vec![d, 3 * d]),
                (p("attn.qkv.bias"), vec![3 * d]),
                (p("attn.out.weight"), vec![d, d]),
                (p("attn.out.bias"), vec![d]),
                (p("ln2.gain"), vec![d]),
                (p("ln2.bias"), vec![d]),
                (p("mlp.in.weight"), vec![d, 4 * d]),
                (p("mlp.in.bias"), vec![4 * d]),
                (p("mlp.out.weight"), vec![4 * d, d]),
                (p("mlp.out.bias"), vec![d]),
            ]);
        }
        out.extend([("ln_f.gain".into(), vec![d]), ("ln_f.bias".into(), vec![d]), ("head.weight".into(), vec![d, v])]);
        out
    }

    pub fn param_count(&self) -> usize {
        self.layout().iter().map(|(_, s)| s.iter().product::<usize>()).sum()
    }
}

/// Whether weight decay applies to a parameter. Embeddings, norms and biases are exempt.
pub fn decays(name: &str) -> bool {
    name.ends_with(".weight")
}

/// Offsets of one block's parameters within the store.
const BLOCK_PARAMS: usize = 12;
const BLOCK_START: usize = 2;

/// Per-sequence pieces of a batch loss graph.
pub struct BatchGraph {
    /// Summed negative log-likelihood over all counted targets.
    pub nll_sum: Var,
    /// Number of non-PAD targets.
    pub targets: usize,
    /// Logits of each sequence that contributed, trimmed past its last counted target.
    pub logits: Vec<Var>,
    /// Input tokens matching each entry of `logits`.
    pub inputs: Vec<Vec<Token>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CausalLM {
    config: ModelConfig,
    params: ParameterStore,
}

impl CausalLM {
    /// Fresh model initialized from `config.seed`.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let resid_scale = 1.0 / libm::sqrt(2.0 * config.n_layers.max(1) as f64);
        let mut params = ParameterStore::new();
        for (name, shape) in config.layout() {
            let n: usize = shape.iter().product();
            let data = if name.ends_with(".gain") {
                vec![1.0; n]
            } else if name.ends_with(".bias") {
                vec![0.0; n]
            } else {
                let k = if name.ends_with("attn.out.weight") || name.ends_with("mlp.out.weight") { resid_scale } else { 1.0 };
                (0..n).map(|_| normal.sample(&mut rng) * k).collect()
            };
            params.insert(name, DenseArray::from_parts(shape, data))?;
        }
        Ok(Self { config, params })
    }

    /// Wraps an existing parameter store, checking it matches the config's layout.
    pub fn from_parts(config: ModelConfig, params: ParameterStore) -> Result<Self> {
        config.validate()?;
        let layout = config.layout();
        if layout.len() != params.len() {
            return Err(contract(format!("expected {} parameter arrays, got {}", layout.len(), params.len())));
        }
        for ((name, shape), (pn, pa)) in layout.iter().zip(params.iter()) {
            if name != pn || shape.as_slice() != pa.shape() {
                return Err(contract(format!("parameter `{pn}` {:?} does not match layout `{name}` {shape:?}", pa.shape())));
            }
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParameterStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterStore {
        &mut self.params
    }

    pub fn into_params(self) -> ParameterStore {
        self.params
    }

    fn check_tokens(&self, tokens: &[Token]) -> Result<()> {
        if tokens.is_empty() {
            return Err(contract("empty token sequence"));
        }
        if tokens.len() > self.config.context_length {
            return Err(contract(format!(
                "sequence of {} tokens exceeds context length {}; chunk the input",
                tokens.len(),
                self.config.context_length
            )));
        }
        if let Some(t) = tokens.iter().find(|&&t| t as usize >= self.config.vocab_size) {
            return Err(contract(format!("token id {t} outside the vocabulary")));
        }
        Ok(())
    }

    /// Records the forward pass for `tokens` on `g`, using parameter leaves `vars`.
    pub fn logits_graph(&self, g: &mut Graph<'_>, vars: &[Var], tokens: &[Token]) -> Result<Var> {
        self.check_tokens(tokens)?;
        let ids: Vec<usize> = tokens.iter().map(|&t| t as usize).collect();
        let positions: Vec<usize> = (0..ids.len()).collect();
        let tok = g.gather(vars[0], &ids)?;
        let pos = g.gather(vars[1], &positions)?;
        let mut h = g.add(tok, pos)?;
        for layer in 0..self.config.n_layers {
            let p = &vars[BLOCK_START + layer * BLOCK_PARAMS..BLOCK_START + (layer + 1) * BLOCK_PARAMS];
            let a = g.layer_norm(h, p[0], p[1])?;
            let qkv = g.matmul(a, p[2])?;
            let qkv = g.add_row(qkv, p[3])?;
            let att = g.causal_attention(qkv, self.config.n_heads)?;
            let o = g.matmul(att, p[4])?;
            let o = g.add_row(o, p[5])?;
            h = g.add(h, o)?;
            let m = g.layer_norm(h, p[6], p[7])?;
            let u = g.matmul(m, p[8])?;
            let u = g.add_row(u, p[9])?;
            let u = g.gelu(u);
            let f = g.matmul(u, p[10])?;
            let f = g.add_row(f, p[11])?;
            h = g.add(h, f)?;
        }
        let base = BLOCK_START + self.config.n_layers * BLOCK_PARAMS;
        let hf = g.layer_norm(h, vars[base], vars[base + 1])?;
        g.matmul(hf, vars[base + 2])
    }

    /// Per-position logits, shape `(len(tokens), vocab_size)`.
    pub fn forward_logits(&self, tokens: &[Token]) -> Result<DenseArray> {
        let mut g = Graph::new();
        let vars = g.bind(&self.params);
        let z = self.logits_graph(&mut g, &vars, tokens)?;
        let out = g.forward(z)?;
        Ok(DenseArray::from_parts(vec![tokens.len(), self.config.vocab_size], out.into_data()))
    }

    /// Records the summed next-token NLL of a batch. PAD targets are skipped.
    pub fn batch_graph(&self, g: &mut Graph<'_>, vars: &[Var], batch: &[Vec<Token>]) -> Result<BatchGraph> {
        let mut terms = Vec::with_capacity(batch.len());
        let mut logits = Vec::with_capacity(batch.len());
        let mut inputs = Vec::with_capacity(batch.len());
        let mut count = 0;
        for seq in batch {
            if seq.len() < 2 {
                return Err(contract("every training sequence needs at least 2 tokens"));
            }
            let targets = &seq[1..];
            let Some(last) = targets.iter().rposition(|&t| t != PAD) else { continue };
            let input = &seq[..=last];
            let tgt: Vec<Option<usize>> =
                targets[..=last].iter().map(|&t| (t != PAD).then_some(t as usize)).collect();
            count += tgt.iter().flatten().count();
            let z = self.logits_graph(g, vars, input)?;
            terms.push(g.cross_entropy(z, &tgt)?);
            logits.push(z);
            inputs.push(input.to_vec());
        }
        if count == 0 {
            return Err(contract("batch has no non-PAD targets"));
        }
        let nll_sum = g.sum_all(&terms)?;
        Ok(BatchGraph { nll_sum, targets: count, logits, inputs })
    }

    /// Mean next-token cross-entropy (nats per token) over non-PAD targets.
    pub fn next_token_loss(&self, batch: &[Vec<Token>]) -> Result<f64> {
        let mut g = Graph::new();
        let vars = g.bind(&self.params);
        let b = self.batch_graph(&mut g, &vars, batch)?;
        let loss = g.scale(b.nll_sum, 1.0 / b.targets as f64);
        Ok(g.forward(loss)?.data()[0])
    }

    /// Mean next-token loss and its gradient.
    pub fn loss_and_grad(&self, batch: &[Vec<Token>]) -> Result<(f64, ParameterStore)> {
        let mut g = Graph::new();
        let vars = g.bind(&self.params);
        let b = self.batch_graph(&mut g, &vars, batch)?;
        let loss = g.scale(b.nll_sum, 1.0 / b.targets as f64);
        let value = g.forward(loss)?.data()[0];
        Ok((value, g.backward(loss)?.param_grads(&self.params)))
    }

    fn logprob_graph(&self, g: &mut Graph<'_>, vars: &[Var], context: &[Token], continuation: &[Token]) -> Result<Var> {
        if continuation.is_empty() {
            return Err(contract("sequence_logprob: empty continuation"));
        }
        if context.is_empty() {
            return Err(contract("sequence_logprob: empty context"));
        }
        if context.len() + continuation.len() > self.config.context_length {
            return Err(contract(format!(
                "sequence_logprob: {} + {} tokens exceed context length {}",
                context.len(),
                continuation.len(),
                self.config.context_length
            )));
        }
        let mut input = context.to_vec();
        input.extend_from_slice(&continuation[..continuation.len() - 1]);
        let mut targets = vec![None; context.len() - 1];
        targets.extend(continuation.iter().map(|&t| Some(t as usize)));
        let z = self.logits_graph(g, vars, &input)?;
        let nll = g.cross_entropy(z, &targets)?;
        Ok(g.scale(nll, -1.0))
    }

    /// log p(continuation | context), summed over continuation tokens.
    pub fn sequence_logprob(&self, context: &[Token], continuation: &[Token]) -> Result<f64> {
        let mut g = Graph::new();
        let vars = g.bind(&self.params);
        let lp = self.logprob_graph(&mut g, &vars, context, continuation)?;
        Ok(g.forward(lp)?.data()[0])
    }

    /// log p(continuation | context) and its gradient.
    pub fn sequence_logprob_grad(&self, context: &[Token], continuation: &[Token]) -> Result<(f64, ParameterStore)> {
        let mut g = Graph::new();
        let vars = g.bind(&self.params);
        let lp = self.logprob_graph(&mut g, &vars, context, continuation)?;
        let value = g.forward(lp)?.data()[0];
        Ok((value, g.backward(lp)?.param_grads(&self.params)))
    }

    /// Greedy decoding: up to `max_new` tokens, stopping after EOS.
    ///
    /// Ties go to the lowest token id. When the running sequence outgrows the
    /// context window only the most recent `context_length` tokens are fed.
    pub fn generate(&self, prompt: &[Token], max_new: usize) -> Result<Vec<Token>> {
        if max_new == 0 {
            return Err(contract("generate: max_new must be at least 1"));
        }
        if prompt.is_empty() {
            return Err(contract("generate: empty prompt"));
        }
        let mut seq = prompt.to_vec();
        let mut out = Vec::new();
        let l = self.config.context_length;
        for _ in 0..max_new {
            let window = &seq[seq.len().saturating_sub(l)..];
            let logits = self.forward_logits(window)?;
            let next = argmax(logits.row(window.len() - 1)) as Token;
            out.push(next);
            seq.push(next);
            if next == EOS {
                break;
            }
        }
        Ok(out)
    }
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{tokenize, BOS};

    fn tiny() -> CausalLM {
        CausalLM::new(ModelConfig { n_layers: 1, d_model: 8, n_heads: 2, context_length: 16, seed: 3, ..Default::default() })
            .unwrap()
    }

    fn zero_head(m: &mut CausalLM) {
        m.params_mut().get_mut("head.weight").unwrap().data_mut().fill(0.0);
    }

    #[test]
    fn config_validation() {
        assert!(ModelConfig { d_model: 10, n_heads: 4, ..Default::default() }.validate().is_err());
        assert!(ModelConfig { context_length: 1, ..Default::default() }.validate().is_err());
        assert!(ModelConfig { vocab_size: 300, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn parameter_count_is_a_function_of_config() {
        let c = ModelConfig { n_layers: 2, d_model: 16, n_heads: 2, context_length: 8, ..Default::default() };
        let m = CausalLM::new(c.clone()).unwrap();
        assert_eq!(m.params().num_params(), c.param_count());
        let d = 16;
        let block = 2 * d + d * 3 * d + 3 * d + d * d + d + 2 * d + d * 4 * d + 4 * d + 4 * d * d + d;
        assert_eq!(c.param_count(), 259 * d + 8 * d + 2 * block + 2 * d + d * 259);
    }

    #[test]
    fn bos_logits_have_vocab_width() {
        let l = tiny().forward_logits(&[BOS]).unwrap();
        assert_eq!(l.shape(), &[1, 259]);
        assert!(l.is_finite());
    }

    #[test]
    fn suffix_does_not_change_prefix_logits() {
        let m = tiny();
        let a = m.forward_logits(&[BOS, 5, 9]).unwrap();
        let b = m.forward_logits(&[BOS, 5, 9, 200, 17]).unwrap();
        for r in 0..3 {
            assert_eq!(a.row(r), b.row(r));
        }
    }

    #[test]
    fn overlong_input_is_a_contract_error() {
        let m = tiny();
        let toks = vec![1; 17];
        assert!(matches!(m.forward_logits(&toks), Err(crate::Error::Contract(_))));
    }

    #[test]
    fn zero_head_is_uniform() {
        let mut m = tiny();
        zero_head(&mut m);
        let l = m.forward_logits(&[BOS, 1, 2]).unwrap();
        assert!(l.data().iter().all(|&v| v == 0.0));
        let loss = m.next_token_loss(&[tokenize(b"hello", true, false)]).unwrap();
        assert!((loss - libm::log(259.0)).abs() < 1e-12);
        let lp = m.sequence_logprob(&[BOS], &[1, 2, 3]).unwrap();
        assert!((lp + 3.0 * libm::log(259.0)).abs() < 1e-12);
    }

    #[test]
    fn all_pad_batch_is_rejected() {
        assert!(tiny().next_token_loss(&[vec![BOS, PAD, PAD]]).is_err());
        assert!(tiny().next_token_loss(&[vec![BOS]]).is_err());
    }

    #[test]
    fn empty_continuation_is_rejected() {
        assert!(tiny().sequence_logprob(&[BOS], &[]).is_err());
    }

    #[test]
    fn chain_rule_of_logprob() {
        let m = tiny();
        let ctx = [BOS, 10, 11];
        let (c1, c2) = ([40, 41], [42, 43, 44]);
        let whole: Vec<Token> = c1.iter().chain(&c2).copied().collect();
        let joint = m.sequence_logprob(&ctx, &whole).unwrap();
        let ctx2: Vec<Token> = ctx.iter().chain(&c1).copied().collect();
        let split = m.sequence_logprob(&ctx, &c1).unwrap() + m.sequence_logprob(&ctx2, &c2).unwrap();
        assert!((joint - split).abs() < 1e-12 * joint.abs().max(1.0));
    }

    #[test]
    fn forced_eos_generation() {
        let mut m = tiny();
        // Final norm emits all-ones, so only the EOS column of the head matters.
        m.params_mut().get_mut("ln_f.gain").unwrap().data_mut().fill(0.0);
        m.params_mut().get_mut("ln_f.bias").unwrap().data_mut().fill(1.0);
        let head = m.params_mut().get_mut("head.weight").unwrap().data_mut();
        head.fill(0.0);
        for r in 0..8 {
            head[r * 259 + EOS as usize] = 1.0;
        }
        assert_eq!(m.generate(&[BOS, 3], 10).unwrap(), vec![EOS]);
    }

    #[test]
    fn greedy_is_deterministic_and_argmax() {
        let m = tiny();
        let prompt = [BOS, 104, 105];
        let a = m.generate(&prompt, 6).unwrap();
        assert_eq!(a, m.generate(&prompt, 6).unwrap());
        let full: Vec<Token> = prompt.iter().chain(&a).copied().collect();
        let logits = m.forward_logits(&full[..full.len() - 1]).unwrap();
        for (k, &tok) in a.iter().enumerate() {
            let row = logits.row(prompt.len() - 1 + k);
            let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(row[tok as usize], best);
        }
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }
}
