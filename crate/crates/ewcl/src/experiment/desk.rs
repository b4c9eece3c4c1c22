//! The default desk-scale experiment: two synthetic languages and their
//! benchmark files.

use std::path::{Path, PathBuf};

use ewcl_core::continual::RegularizerSpec;
use ewcl_core::data::{synth_mc_items, synth_qa_pairs, GrammarId, Grammar, McKind, PromptTemplate};
use ewcl_core::eval::{ChoiceNorm, QaMode};
use ewcl_core::model::ModelConfig;
use ewcl_core::trainer::TrainConfig;

use super::config::{
    CorpusSpec, EvalSuiteSpec, FisherSpec, JudgeSpec, NamedPath, SweepConfig, TaskSpec,
};
use crate::error::Result;
use crate::io::{save_mc, save_qa, write_atomic};

const MC_ITEMS: usize = 40;
const QA_PAIRS: usize = 30;
const FISHER_ITEMS: usize = 64;
// continuation items name B words among the choices, so B-only embedding
// rows get nonzero Fisher
const FISHER_CONTINUATION: usize = 4;

fn named(name: &str) -> NamedPath {
    NamedPath { name: name.into(), path: PathBuf::from("data").join(format!("{name}.jsonl")) }
}

fn suite(tag: &str, grammar: GrammarId, seed: u64, judge: bool) -> EvalSuiteSpec {
    let t = tag.to_lowercase();
    EvalSuiteSpec {
        tag: tag.into(),
        held_out: Some(CorpusSpec::Synthetic { grammar, n_docs: 30, seed }),
        qa: Some(named(&format!("{t}-qa"))),
        qa_mode: QaMode::Joint,
        mc: vec![named(&format!("{t}-continuation")), named(&format!("{t}-word-order"))],
        template: PromptTemplate::QuestionChoicesAnswer,
        norm: ChoiceNorm::PerToken,
        judge_questions: judge.then(|| named(&format!("{t}-qa"))),
    }
}

/// The default sweep over the two synthetic languages, with paths relative
/// to the directory the config is written to.
pub fn desk_config() -> SweepConfig {
    SweepConfig {
        model: ModelConfig { n_layers: 2, d_model: 32, n_heads: 4, context_length: 128, ..ModelConfig::default() },
        task_a: TaskSpec {
            corpus: CorpusSpec::Synthetic { grammar: GrammarId::A, n_docs: 400, seed: 1 },
            train: TrainConfig {
                learning_rate: 3e-3,
                batch_size: 4,
                total_steps: 1000,
                checkpoint_every: 250,
                ..TrainConfig::default()
            },
        },
        task_b: TaskSpec {
            corpus: CorpusSpec::Synthetic { grammar: GrammarId::B, n_docs: 400, seed: 2 },
            train: TrainConfig { total_steps: 2000, checkpoint_every: 500, ..TrainConfig::default() },
        },
        fisher: FisherSpec { dataset: PathBuf::from("data/fisher-a.jsonl"), template: PromptTemplate::QuestionChoicesAnswer },
        eval: vec![suite("A", GrammarId::A, 101, false), suite("B", GrammarId::B, 102, true)],
        judge: Some(JudgeSpec {
            train: TrainConfig {
                learning_rate: 3e-3,
                batch_size: 4,
                total_steps: 1500,
                checkpoint_every: 500,
                ..TrainConfig::default()
            },
            max_new: 40,
        }),
        // one step below the default grid; at this model size 1e2 already
        // costs too much task-B perplexity
        lambdas: vec![0.0, 1e1, 1e2, 1e3, 1e6, 1e9, 1e12],
        regularizer: RegularizerSpec::default(),
        seed: 0,
        output_dir: PathBuf::from("runs/desk"),
        base_dir: PathBuf::new(),
    }
}

/// Writes the benchmark files and `config.json` for [`desk_config`] into `dir`.
pub fn write_desk(dir: &Path) -> Result<SweepConfig> {
    let a = Grammar::new(GrammarId::A);
    let b = Grammar::new(GrammarId::B);
    let data = dir.join("data");
    let mut fisher = synth_mc_items(&a, &b, McKind::WordOrder, FISHER_ITEMS, 7);
    fisher.extend(synth_mc_items(&a, &b, McKind::Continuation, FISHER_CONTINUATION, 8));
    save_mc(&data.join("fisher-a.jsonl"), &fisher)?;
    for (t, lang, other, seed) in [("a", &a, &b, 10), ("b", &b, &a, 20)] {
        save_mc(&data.join(format!("{t}-continuation.jsonl")), &synth_mc_items(lang, other, McKind::Continuation, MC_ITEMS, seed))?;
        save_mc(&data.join(format!("{t}-word-order.jsonl")), &synth_mc_items(lang, other, McKind::WordOrder, MC_ITEMS, seed + 1))?;
        save_qa(&data.join(format!("{t}-qa.jsonl")), &synth_qa_pairs(lang, QA_PAIRS, seed + 2))?;
    }
    let mut cfg = desk_config();
    write_atomic(&dir.join("config.json"), serde_json::to_string_pretty(&cfg).unwrap().as_bytes())?;
    cfg.base_dir = dir.to_path_buf();
    cfg.validate()?;
    Ok(cfg)
}
