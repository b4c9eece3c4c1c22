use alloc::string::String;
use alloc::vec::Vec;

use super::{adamw_step, lr_schedule, OptimState, TrainConfig};
use crate::continual::{ewc_penalty_graph, lwf_penalty_graph, si_penalty_graph, FisherDiagonal, SIState, TaskSnapshot};
use crate::data::BatchStream;
use crate::error::{Error, Result};
use crate::model::{decays, CausalLM};
use crate::numerics::{DenseArray, Graph, ParameterStore};

/// A regularizer bound to the artifacts of the previous task.
#[derive(Debug, Clone, Copy)]
pub enum Regularizer<'a> {
    Ewc { strength: f64, snapshot: &'a TaskSnapshot, fisher: &'a FisherDiagonal },
    Si { strength: f64, anchor: &'a ParameterStore, importance: &'a ParameterStore },
    Lwf { strength: f64, temperature: f64, teacher: &'a CausalLM },
}

impl Regularizer<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Regularizer::Ewc { .. } => "ewc",
            Regularizer::Si { .. } => "si",
            Regularizer::Lwf { .. } => "lwf",
        }
    }

    fn strength(&self) -> f64 {
        match *self {
            Regularizer::Ewc { strength, .. } | Regularizer::Si { strength, .. } | Regularizer::Lwf { strength, .. } => {
                strength
            }
        }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub lr: f64,
    /// Mean task cross-entropy before this step's update.
    pub task_loss: f64,
    /// `(regularizer name, penalty value)` before this step's update.
    pub penalties: Vec<(String, f64)>,
}

/// Mutable optimizer-side state carried across steps and checkpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub optim: OptimState,
    /// Present when synaptic-intelligence importance is being collected.
    pub si: Option<SIState>,
}

impl TrainState {
    pub fn new(params: &ParameterStore) -> Self {
        Self { optim: OptimState::new(params), si: None }
    }

    pub fn with_si(params: &ParameterStore, epsilon: f64) -> Result<Self> {
        Ok(Self { optim: OptimState::new(params), si: Some(SIState::begin(params, epsilon)?) })
    }
}

/// Observers of the training loop. Errors abort training.
pub trait TrainHooks {
    fn on_step(&mut self, _record: &StepRecord) -> Result<()> {
        Ok(())
    }

    /// Called every `checkpoint_every` steps and after the final step.
    fn on_checkpoint(&mut self, _model: &CausalLM, _state: &TrainState, _data_position: u64) -> Result<()> {
        Ok(())
    }
}

pub struct NoHooks;

impl TrainHooks for NoHooks {}

/// Trains until `config.total_steps`, resuming from `state.optim.step`.
///
/// Each step averages `grad_accum_steps` micro-batch gradients of
/// `task loss + Σ penalties`. Regularizers with zero strength are logged as 0
/// and left out of the graph entirely.
pub fn train_task(
    model: &mut CausalLM,
    stream: &mut BatchStream,
    config: &TrainConfig,
    regularizers: &[Regularizer<'_>],
    state: &mut TrainState,
    hooks: &mut dyn TrainHooks,
) -> Result<Vec<StepRecord>> {
    config.validate()?;
    model.params().check_aligned(&state.optim.m, "optimizer state")?;
    let decay: Vec<bool> = model.params().names().iter().map(|n| decays(n)).collect();
    let mut log = Vec::new();
    let accum = config.grad_accum_steps;
    while state.optim.step < config.total_steps {
        let step = state.optim.step + 1;
        let lr = lr_schedule(step, config);
        let mut grads = model.params().zeros_like();
        let mut task_loss = 0.0;
        let mut penalty_values = alloc::vec![0.0; regularizers.len()];
        for _ in 0..accum {
            let batch = stream.next_batch();
            let mut g = Graph::new();
            let vars = g.bind(model.params());
            let b = model.batch_graph(&mut g, &vars, &batch)?;
            let task = g.scale(b.nll_sum, 1.0 / b.targets as f64);
            let mut terms = alloc::vec![task];
            for (k, reg) in regularizers.iter().enumerate() {
                if reg.strength() == 0.0 {
                    continue;
                }
                let p = match *reg {
                    Regularizer::Ewc { strength, snapshot, fisher } => {
                        ewc_penalty_graph(&mut g, &vars, model.params(), snapshot, fisher, strength)?
                    }
                    Regularizer::Si { strength, anchor, importance } => {
                        si_penalty_graph(&mut g, &vars, model.params(), anchor, importance, strength)?
                    }
                    Regularizer::Lwf { strength, temperature, teacher } => {
                        let teacher_logits: Vec<DenseArray> =
                            b.inputs.iter().map(|x| teacher.forward_logits(x)).collect::<Result<_>>()?;
                        lwf_penalty_graph(&mut g, &b.logits, &teacher_logits, strength, temperature)?
                    }
                };
                penalty_values[k] += g.scalar(p) / accum as f64;
                terms.push(p);
            }
            let total = g.sum_all(&terms)?;
            task_loss += g.scalar(task) / accum as f64;
            let micro = g.backward(total).map_err(|e| match e {
                Error::NumericOverflow { .. } => Error::NonFiniteGradient { step },
                other => other,
            })?;
            let micro = micro.param_grads(model.params());
            for (acc, gm) in grads.arrays_mut().iter_mut().zip(micro.arrays()) {
                for (a, &v) in acc.data_mut().iter_mut().zip(gm.data()) {
                    *a += v;
                }
            }
        }
        if accum > 1 {
            for a in grads.arrays_mut() {
                a.data_mut().iter_mut().for_each(|v| *v /= accum as f64);
            }
        }
        let before = state.si.is_some().then(|| model.params().clone());
        adamw_step(model.params_mut(), &grads, &mut state.optim, lr, config, &decay)?;
        if let (Some(si), Some(before)) = (state.si.as_mut(), before) {
            let mut delta = model.params().clone();
            for (d, b) in delta.arrays_mut().iter_mut().zip(before.arrays()) {
                for (x, &y) in d.data_mut().iter_mut().zip(b.data()) {
                    *x -= y;
                }
            }
            si.accumulate(&delta, &grads)?;
        }
        let record = StepRecord {
            step,
            lr,
            task_loss,
            penalties: regularizers.iter().zip(&penalty_values).map(|(r, &v)| (r.name().into(), v)).collect(),
        };
        hooks.on_step(&record)?;
        log.push(record);
        let due = config.checkpoint_every > 0 && step % config.checkpoint_every == 0;
        if due || step == config.total_steps {
            hooks.on_checkpoint(model, state, BatchStream::position(stream))?;
        }
    }
    Ok(log)
}
