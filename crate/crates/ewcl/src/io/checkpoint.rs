use std::path::Path;

use ewcl_core::continual::{FisherDiagonal, SIState};
use ewcl_core::data::PromptTemplate;
use ewcl_core::model::{CausalLM, ModelConfig};
use ewcl_core::trainer::{OptimState, TrainState};
use serde::{Deserialize, Serialize};

use super::container::{params_hash, Container};
use crate::error::{Error, Result};

const CHECKPOINT: &str = "checkpoint";
const FISHER: &str = "fisher";

/// Model parameters plus whatever is needed to resume training.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: CausalLM,
    pub train: Option<TrainState>,
    /// Batches consumed from the data stream.
    pub data_position: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointMeta {
    model: ModelConfig,
    step: u64,
    data_position: u64,
    si_epsilon: Option<f64>,
}

impl Checkpoint {
    pub fn weights(model: CausalLM) -> Self {
        Self { model, train: None, data_position: 0 }
    }

    pub fn step(&self) -> u64 {
        self.train.as_ref().map_or(0, |t| t.optim.step)
    }

    /// Identity of the parameters, independent of optimizer state.
    pub fn hash(&self) -> String {
        params_hash(self.model.params())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = CheckpointMeta {
            model: self.model.config().clone(),
            step: self.step(),
            data_position: self.data_position,
            si_epsilon: self.train.as_ref().and_then(|t| t.si.as_ref()).map(|s| s.epsilon()),
        };
        let mut c = Container { kind: CHECKPOINT.into(), meta: serde_json::to_value(meta).unwrap(), arrays: Vec::new() };
        c.push_group("param", self.model.params());
        if let Some(t) = &self.train {
            c.push_group("adam.m", &t.optim.m);
            c.push_group("adam.v", &t.optim.v);
            if let Some(si) = &t.si {
                c.push_group("si.start", si.start());
                c.push_group("si.numerator", si.numerator());
            }
        }
        c.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let c = Container::load(path, CHECKPOINT)?;
        let meta: CheckpointMeta = serde_json::from_value(c.meta.clone())
            .map_err(|e| Error::Format { path: path.to_path_buf(), msg: e.to_string() })?;
        let missing = |what: &str| Error::Format { path: path.to_path_buf(), msg: format!("missing {what}") };
        let params = c.group("param")?.ok_or_else(|| missing("parameters"))?;
        let model = CausalLM::from_parts(meta.model, params)?;
        let train = match (c.group("adam.m")?, c.group("adam.v")?) {
            (Some(m), Some(v)) => {
                let si = match (c.group("si.start")?, c.group("si.numerator")?, meta.si_epsilon) {
                    (Some(s), Some(n), Some(eps)) => Some(SIState::from_parts(s, n, eps)?),
                    _ => None,
                };
                Some(TrainState { optim: OptimState { m, v, step: meta.step }, si })
            }
            _ => None,
        };
        Ok(Self { model, train, data_position: meta.data_position })
    }
}

/// A Fisher diagonal tied to the checkpoint it was estimated at.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherArtifact {
    pub fisher: FisherDiagonal,
    pub template: PromptTemplate,
    pub anchor_hash: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FisherMeta {
    examples: usize,
    template: String,
    anchor_hash: String,
}

impl FisherArtifact {
    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = FisherMeta {
            examples: self.fisher.examples(),
            template: self.template.id().into(),
            anchor_hash: self.anchor_hash.clone(),
        };
        let mut c = Container { kind: FISHER.into(), meta: serde_json::to_value(meta).unwrap(), arrays: Vec::new() };
        c.push_group("fisher", self.fisher.values());
        c.save(path)
    }

    /// Loads the artifact and refuses it unless it was computed at `anchor_hash`.
    pub fn load(path: &Path, anchor_hash: &str) -> Result<Self> {
        let a = Self::load_unchecked(path)?;
        if a.anchor_hash != anchor_hash {
            return Err(Error::AnchorMismatch { expected: anchor_hash.into(), found: a.anchor_hash });
        }
        Ok(a)
    }

    pub fn load_unchecked(path: &Path) -> Result<Self> {
        let c = Container::load(path, FISHER)?;
        let bad = |msg: String| Error::Format { path: path.to_path_buf(), msg };
        let meta: FisherMeta = serde_json::from_value(c.meta.clone()).map_err(|e| bad(e.to_string()))?;
        let template = [PromptTemplate::QuestionChoicesAnswer, PromptTemplate::Bare]
            .into_iter()
            .find(|t| t.id() == meta.template)
            .ok_or_else(|| bad(format!("unknown template {}", meta.template)))?;
        let values = c.group("fisher")?.ok_or_else(|| bad("missing fisher values".into()))?;
        Ok(Self { fisher: FisherDiagonal::new(values, meta.examples)?, template, anchor_hash: meta.anchor_hash })
    }
}
