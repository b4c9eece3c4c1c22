#![allow(dead_code)]

use std::path::Path;

use ewcl::experiment::{write_desk, CorpusSpec, SweepConfig};
use ewcl_core::data::GrammarId;
use ewcl_core::model::ModelConfig;
use ewcl_core::trainer::TrainConfig;

fn quick(steps: u64) -> TrainConfig {
    TrainConfig { learning_rate: 3e-3, batch_size: 2, total_steps: steps, checkpoint_every: 3, ..TrainConfig::default() }
}

/// The desk benchmark files with a model and schedule small enough for tests.
pub fn tiny_config(dir: &Path) -> SweepConfig {
    let mut cfg = write_desk(dir).unwrap();
    cfg.model = ModelConfig { n_layers: 1, d_model: 8, n_heads: 2, context_length: 128, ..ModelConfig::default() };
    cfg.task_a.corpus = CorpusSpec::Synthetic { grammar: GrammarId::A, n_docs: 20, seed: 1 };
    cfg.task_b.corpus = CorpusSpec::Synthetic { grammar: GrammarId::B, n_docs: 20, seed: 2 };
    cfg.task_a.train = quick(6);
    cfg.task_b.train = quick(5);
    for s in &mut cfg.eval {
        if let Some(CorpusSpec::Synthetic { n_docs, .. }) = &mut s.held_out {
            *n_docs = 3;
        }
    }
    if let Some(j) = &mut cfg.judge {
        j.train = quick(4);
        j.max_new = 6;
    }
    cfg.lambdas = vec![0.0, 1e3, 1e12];
    cfg
}

/// Writes `cfg` as `config.json` in its base directory.
pub fn save_config(cfg: &SweepConfig) -> std::path::PathBuf {
    let path = cfg.base_dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}
