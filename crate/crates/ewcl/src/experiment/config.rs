use std::path::{Path, PathBuf};

use ewcl_core::continual::RegularizerSpec;
use ewcl_core::data::{synth_corpus, Corpus, GrammarId, PromptTemplate};
use ewcl_core::eval::{ChoiceNorm, QaMode};
use ewcl_core::model::ModelConfig;
use ewcl_core::trainer::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};
use crate::io::{load_corpus_dir, sha256_hex};

/// Where a corpus comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CorpusSpec {
    Synthetic { grammar: GrammarId, n_docs: usize, seed: u64 },
    /// Directory of `.txt` files; `language` tags the corpus.
    Dir { path: PathBuf, language: String },
}

impl CorpusSpec {
    pub fn load(&self, base: &Path) -> Result<Corpus> {
        match self {
            CorpusSpec::Synthetic { grammar, n_docs, seed } => Ok(synth_corpus(*grammar, *n_docs, *seed)?),
            CorpusSpec::Dir { path, language } => load_corpus_dir(&base.join(path), language),
        }
    }

    fn paths(&self) -> Vec<&Path> {
        match self {
            CorpusSpec::Synthetic { .. } => Vec::new(),
            CorpusSpec::Dir { path, .. } => vec![path.as_path()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub corpus: CorpusSpec,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedPath {
    pub name: String,
    pub path: PathBuf,
}

/// Benchmarks for one language or task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSuiteSpec {
    pub tag: String,
    /// Held-out text scored by perplexity.
    pub held_out: Option<CorpusSpec>,
    pub qa: Option<NamedPath>,
    #[serde(default)]
    pub qa_mode: QaMode,
    #[serde(default)]
    pub mc: Vec<NamedPath>,
    #[serde(default)]
    pub template: PromptTemplate,
    #[serde(default)]
    pub norm: ChoiceNorm,
    /// QA file whose questions are answered by the model and graded by the judge.
    pub judge_questions: Option<NamedPath>,
}

impl EvalSuiteSpec {
    fn paths(&self) -> Vec<&Path> {
        let mut out: Vec<&Path> = self.held_out.iter().flat_map(CorpusSpec::paths).collect();
        out.extend(self.qa.iter().chain(&self.mc).chain(&self.judge_questions).map(|n| n.path.as_path()));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FisherSpec {
    pub dataset: PathBuf,
    #[serde(default)]
    pub template: PromptTemplate,
}

/// Reference model trained on the task-B corpus that grades generated answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JudgeSpec {
    pub train: TrainConfig,
    pub max_new: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub model: ModelConfig,
    pub task_a: TaskSpec,
    pub task_b: TaskSpec,
    pub fisher: FisherSpec,
    pub eval: Vec<EvalSuiteSpec>,
    pub judge: Option<JudgeSpec>,
    pub lambdas: Vec<f64>,
    #[serde(default)]
    pub regularizer: RegularizerSpec,
    /// Seeds model initialization and every data order.
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Directory relative paths are resolved against; the config file's
    /// directory when loaded from disk.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

pub fn default_lambdas() -> Vec<f64> {
    vec![0.0, 1e2, 1e3, 1e6, 1e9, 1e12]
}

impl SweepConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).at(path)?;
        let mut cfg: SweepConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.base_dir.join(p)
    }

    pub fn output(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.task_a.train.validate()?;
        self.task_b.train.validate()?;
        self.regularizer.validate()?;
        if let Some(j) = &self.judge {
            j.train.validate()?;
            if j.max_new == 0 {
                return Err(Error::Config("judge.max_new must be at least 1".into()));
            }
        }
        validate_lambdas(&self.lambdas)?;
        let mut tags: Vec<&str> = self.eval.iter().map(|s| s.tag.as_str()).collect();
        tags.sort_unstable();
        if tags.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("eval suite tags must be unique".into()));
        }
        let mut paths = vec![self.fisher.dataset.as_path()];
        paths.extend(self.task_a.corpus.paths());
        paths.extend(self.task_b.corpus.paths());
        paths.extend(self.eval.iter().flat_map(EvalSuiteSpec::paths));
        for p in paths {
            let full = self.resolve(p);
            if !full.exists() {
                return Err(Error::Config(format!("{} does not exist", full.display())));
            }
        }
        Ok(())
    }

    fn hash_of<T: Serialize>(value: &T) -> String {
        sha256_hex(&serde_json::to_vec(value).expect("config serializes"))
    }

    /// Hash of everything that determines the task-A checkpoint, Fisher,
    /// judge and baseline evaluations.
    pub fn baseline_hash(&self) -> String {
        Self::hash_of(&(
            &self.model,
            &self.task_a,
            &self.fisher,
            &self.eval,
            &self.judge,
            self.seed,
            self.regularizer.kind,
            self.regularizer.epsilon,
            env!("CARGO_PKG_VERSION"),
        ))
    }

    /// Hash of everything that determines one sweep cell except λ itself.
    pub fn sweep_hash(&self) -> String {
        Self::hash_of(&(self.baseline_hash(), &self.task_b, &self.regularizer))
    }
}

pub fn validate_lambdas(lambdas: &[f64]) -> Result<()> {
    if lambdas.is_empty() {
        return Err(Error::Config("lambda grid is empty".into()));
    }
    if lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
        return Err(Error::Config("lambda values must be finite and non-negative".into()));
    }
    if lambdas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("lambda values must be strictly increasing".into()));
    }
    Ok(())
}
