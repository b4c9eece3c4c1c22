use std::fs;
use std::path::{Path, PathBuf};

use ewcl_core::continual::{estimate_fisher, lr_decay, RegularizerKind, TaskSnapshot};
use ewcl_core::data::{BatchStream, Corpus, MCItem, PromptTemplate, QAPair};
use ewcl_core::eval::{judge_perplexity, mc_accuracy, qa_perplexity, text_perplexity, EvalRecord, Metric};
use ewcl_core::model::CausalLM;
use ewcl_core::numerics::ParameterStore;
use ewcl_core::trainer::{train_task, Regularizer, TrainConfig, TrainState};
use serde::{Deserialize, Serialize};

use super::config::{EvalSuiteSpec, SweepConfig};
use crate::error::{Error, IoContext, Result};
use crate::io::{load_mc, load_qa, load_records, save_records, write_atomic, Checkpoint, Container, FisherArtifact, TrainLogger};

/// Environment variable holding the number of worker threads.
pub const THREADS_ENV: &str = "EWCL_THREADS";

pub fn thread_count() -> usize {
    std::env::var(THREADS_ENV).ok().and_then(|v| v.parse().ok()).filter(|&n| n > 0).unwrap_or(1)
}

/// An evaluation suite with its datasets read into memory.
#[derive(Debug, Clone)]
pub struct LoadedSuite {
    pub spec: EvalSuiteSpec,
    pub held_out: Option<Corpus>,
    pub qa: Option<Vec<QAPair>>,
    pub mc: Vec<(String, Vec<MCItem>)>,
    pub judge_questions: Option<Vec<String>>,
}

impl LoadedSuite {
    pub fn load(spec: &EvalSuiteSpec, base: &Path) -> Result<Self> {
        Ok(Self {
            spec: spec.clone(),
            held_out: spec.held_out.as_ref().map(|c| c.load(base)).transpose()?,
            qa: spec.qa.as_ref().map(|q| load_qa(&base.join(&q.path))).transpose()?,
            mc: spec.mc.iter().map(|m| Ok((m.name.clone(), load_mc(&base.join(&m.path))?))).collect::<Result<_>>()?,
            judge_questions: spec
                .judge_questions
                .as_ref()
                .map(|q| Ok::<_, Error>(load_qa(&base.join(&q.path))?.into_iter().map(|p| p.question).collect()))
                .transpose()?,
        })
    }
}

/// Runs every benchmark of `suite` on `model`.
pub fn evaluate(
    model: &CausalLM,
    suite: &LoadedSuite,
    judge: Option<(&CausalLM, usize)>,
    lambda: Option<f64>,
    checkpoint: &str,
) -> Result<Vec<EvalRecord>> {
    let spec = &suite.spec;
    let record = |metric, dataset: &str, value, n_items| EvalRecord {
        metric,
        dataset: dataset.to_string(),
        tag: spec.tag.clone(),
        lambda,
        checkpoint: checkpoint.to_string(),
        value,
        n_items,
    };
    let mut out = Vec::new();
    if let Some(corpus) = &suite.held_out {
        let v = text_perplexity(model, corpus.documents())?;
        out.push(record(Metric::Ppl, "heldout", v, corpus.documents().len()));
    }
    if let (Some(pairs), Some(q)) = (&suite.qa, &spec.qa) {
        out.push(record(Metric::Ppl, &q.name, qa_perplexity(model, pairs, spec.qa_mode)?, pairs.len()));
    }
    for (name, items) in &suite.mc {
        out.push(record(Metric::McAcc, name, mc_accuracy(model, items, spec.template, spec.norm)?, items.len()));
    }
    if let (Some((judge, max_new)), Some(questions), Some(q)) = (judge, &suite.judge_questions, &spec.judge_questions)
    {
        let r = judge_perplexity(model, judge, questions, max_new)?;
        out.push(record(Metric::JudgePpl, &q.name, r.perplexity, r.scored));
    }
    for r in &out {
        r.validate()?;
    }
    Ok(out)
}

/// Trains `init` on `corpus`, resuming from `dir/<stem>.ckpt` when present.
fn train_resumable(
    dir: &Path,
    stem: &str,
    init: CausalLM,
    corpus: &Corpus,
    config: &TrainConfig,
    seed: u64,
    regularizers: &[Regularizer<'_>],
    si_epsilon: Option<f64>,
) -> Result<Checkpoint> {
    let ck_path = dir.join(format!("{stem}.ckpt"));
    let (mut model, mut state, position) = if ck_path.exists() {
        let ck = Checkpoint::load(&ck_path)?;
        let state = ck.train.ok_or_else(|| Error::Format { path: ck_path.clone(), msg: "no optimizer state".into() })?;
        (ck.model, state, ck.data_position)
    } else {
        let state = match si_epsilon {
            Some(eps) => TrainState::with_si(init.params(), eps)?,
            None => TrainState::new(init.params()),
        };
        (init, state, 0)
    };
    let mut stream = BatchStream::new(corpus, model.config().context_length, config.batch_size, seed)?;
    stream.seek(position);
    if state.optim.step < config.total_steps {
        let log = dir.join(format!("{stem}.log.jsonl"));
        let mut logger = TrainLogger::open(&log, Some(&ck_path), state.optim.step)?;
        train_task(&mut model, &mut stream, config, regularizers, &mut state, &mut logger)?;
    }
    Ok(Checkpoint { model, train: Some(state), data_position: BatchStream::position(&stream) })
}

fn checkpoint_id(label: &str, hash: &str) -> String {
    format!("{label}@{}", &hash[..12])
}

/// Everything produced before task B.
#[derive(Debug, Clone)]
pub struct Baseline {
    pub snapshot: TaskSnapshot,
    pub anchor_hash: String,
    pub fisher: Option<FisherArtifact>,
    pub si_importance: Option<ParameterStore>,
    pub judge: Option<CausalLM>,
    pub suites: Vec<LoadedSuite>,
    pub records: Vec<EvalRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BaselineMeta {
    baseline_hash: String,
    anchor_hash: String,
}

const SI_IMPORTANCE: &str = "si-importance";

/// Removes `dir` when its recorded hash differs from `hash`, then records `hash`.
fn claim_dir(dir: &Path, hash: &str) -> Result<()> {
    let marker = dir.join("hash");
    if dir.exists() && fs::read_to_string(&marker).ok().as_deref() != Some(hash) {
        fs::remove_dir_all(dir).at(dir)?;
    }
    fs::create_dir_all(dir).at(dir)?;
    write_atomic(&marker, hash.as_bytes())
}

/// Trains (or loads) the task-A model, its Fisher diagonal, the judge and the
/// baseline evaluations.
pub fn run_baseline(cfg: &SweepConfig) -> Result<Baseline> {
    cfg.validate()?;
    let hash = cfg.baseline_hash();
    let dir = cfg.output().join("baseline");
    let suites: Vec<LoadedSuite> = cfg.eval.iter().map(|s| LoadedSuite::load(s, &cfg.base_dir)).collect::<Result<_>>()?;
    let fisher_items = load_mc(&cfg.resolve(&cfg.fisher.dataset))?;
    claim_dir(&dir, &hash)?;
    let kind = cfg.regularizer.kind;

    let corpus_a = cfg.task_a.corpus.load(&cfg.base_dir)?;
    let si_eps = (kind == RegularizerKind::Si).then_some(cfg.regularizer.epsilon);
    let task_a = train_resumable(
        &dir,
        "task_a",
        CausalLM::new(cfg.model.clone())?,
        &corpus_a,
        &cfg.task_a.train,
        cfg.seed,
        &[],
        si_eps,
    )?;
    let anchor_hash = task_a.hash();
    let snapshot = TaskSnapshot::capture(&task_a.model);

    let fisher_path = dir.join("fisher.bin");
    let fisher = if kind == RegularizerKind::Ewc {
        Some(if fisher_path.exists() {
            FisherArtifact::load(&fisher_path, &anchor_hash)?
        } else {
            let a = fisher_artifact(&task_a.model, &fisher_items, cfg.fisher.template)?;
            a.save(&fisher_path)?;
            a
        })
    } else {
        None
    };

    let si_importance = match task_a.train.as_ref().and_then(|t| t.si.as_ref()) {
        Some(si) => {
            let importance = si.consolidate(task_a.model.params())?;
            let mut c = Container { kind: SI_IMPORTANCE.into(), meta: anchor_hash.clone().into(), arrays: Vec::new() };
            c.push_group("importance", &importance);
            c.save(&dir.join("si_importance.bin"))?;
            Some(importance)
        }
        None => None,
    };

    let judge = match &cfg.judge {
        Some(j) => {
            let corpus_b = cfg.task_b.corpus.load(&cfg.base_dir)?;
            let init = CausalLM::new(ewcl_core::model::ModelConfig { seed: cfg.model.seed.wrapping_add(1), ..cfg.model.clone() })?;
            Some(train_resumable(&dir, "judge", init, &corpus_b, &j.train, cfg.seed.wrapping_add(2), &[], None)?.model)
        }
        None => None,
    };

    let records_path = dir.join("records.jsonl");
    let meta_path = dir.join("baseline.json");
    let cached = fs::read(&meta_path)
        .ok()
        .and_then(|b| serde_json::from_slice::<BaselineMeta>(&b).ok())
        .is_some_and(|m| m.baseline_hash == hash && m.anchor_hash == anchor_hash);
    let records = if cached && records_path.exists() {
        load_records(&records_path)?
    } else {
        let judge_ref = judge.as_ref().zip(cfg.judge.as_ref().map(|j| j.max_new));
        let id = checkpoint_id("task_a", &anchor_hash);
        let mut records = Vec::new();
        for s in &suites {
            records.extend(evaluate(&task_a.model, s, judge_ref, None, &id)?);
        }
        save_records(&records_path, &records)?;
        let meta = BaselineMeta { baseline_hash: hash, anchor_hash: anchor_hash.clone() };
        write_atomic(&meta_path, &serde_json::to_vec_pretty(&meta).unwrap())?;
        records
    };
    Ok(Baseline { snapshot, anchor_hash, fisher, si_importance, judge, suites, records })
}

pub fn fisher_artifact(model: &CausalLM, items: &[MCItem], template: PromptTemplate) -> Result<FisherArtifact> {
    let fisher = estimate_fisher(model, items, template)?;
    Ok(FisherArtifact { fisher, template, anchor_hash: crate::io::params_hash(model.params()) })
}

/// Outcome of training and evaluating one λ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellResult {
    pub lambda: f64,
    pub checkpoint: Option<String>,
    /// ‖θ − θ_A‖₂ after task B.
    pub anchor_distance: Option<f64>,
    /// max |θᵢ − θ_A,ᵢ| after task B.
    pub max_shift: Option<f64>,
    pub records: Vec<EvalRecord>,
    pub error: Option<String>,
}

/// All records of a sweep plus provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepResult {
    pub config_hash: String,
    pub code_version: String,
    pub baseline: Vec<EvalRecord>,
    /// Sorted by λ.
    pub cells: Vec<CellResult>,
}

impl SweepResult {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).at(path)?;
        serde_json::from_slice(&bytes).map_err(|e| Error::Format { path: path.to_path_buf(), msg: e.to_string() })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &serde_json::to_vec_pretty(self).unwrap())
    }
}

pub fn cell_dir(cfg: &SweepConfig, lambda: f64) -> PathBuf {
    cfg.output().join("cells").join(format!("lambda-{lambda:e}"))
}

fn cell_hash(cfg: &SweepConfig, lambda: f64) -> String {
    crate::io::sha256_hex(format!("{}:{lambda:e}", cfg.sweep_hash()).as_bytes())
}

/// Trains task B from θ_A at strength `lambda` and evaluates it. Completed
/// cells are loaded from disk; interrupted ones resume from their checkpoint.
pub fn run_cell(cfg: &SweepConfig, base: &Baseline, lambda: f64) -> Result<CellResult> {
    let dir = cell_dir(cfg, lambda);
    let hash = cell_hash(cfg, lambda);
    let done = dir.join("cell.json");
    if fs::read_to_string(dir.join("hash")).ok().as_deref() == Some(hash.as_str()) && done.exists() {
        return SweepResult::load_cell(&done);
    }
    claim_dir(&dir, &hash)?;
    let spec = &cfg.regularizer;
    let regularizers: Vec<Regularizer<'_>> = match spec.kind {
        RegularizerKind::None => Vec::new(),
        RegularizerKind::Ewc => {
            let f = base.fisher.as_ref().expect("EWC baseline carries a Fisher diagonal");
            vec![Regularizer::Ewc { strength: lambda, snapshot: &base.snapshot, fisher: &f.fisher }]
        }
        RegularizerKind::Si => vec![Regularizer::Si {
            strength: lambda,
            anchor: base.snapshot.anchor(),
            importance: base.si_importance.as_ref().expect("SI baseline carries importances"),
        }],
        RegularizerKind::Lwf => vec![Regularizer::Lwf {
            strength: lambda,
            temperature: spec.lwf_temperature,
            teacher: base.snapshot.teacher(),
        }],
    };
    let damped;
    let regularizers = match (regularizers.as_slice(), spec.fisher_damping) {
        ([Regularizer::Ewc { strength, snapshot, fisher }], d) if d > 0.0 => {
            damped = fisher.damped(d)?;
            vec![Regularizer::Ewc { strength: *strength, snapshot, fisher: &damped }]
        }
        _ => regularizers,
    };
    let mut train = cfg.task_b.train.clone();
    if spec.lr_decay_gamma != 1.0 {
        train.learning_rate = lr_decay(cfg.task_a.train.learning_rate, spec.lr_decay_gamma, spec.lr_min);
    }
    let corpus_b = cfg.task_b.corpus.load(&cfg.base_dir)?;
    let ck = train_resumable(
        &dir,
        "model",
        base.snapshot.teacher().clone(),
        &corpus_b,
        &train,
        cfg.seed.wrapping_add(1),
        &regularizers,
        None,
    )?;
    let id = checkpoint_id(&format!("lambda-{lambda:e}"), &ck.hash());
    let judge = base.judge.as_ref().zip(cfg.judge.as_ref().map(|j| j.max_new));
    let mut records = Vec::new();
    for s in &base.suites {
        records.extend(evaluate(&ck.model, s, judge, Some(lambda), &id)?);
    }
    let anchor = base.snapshot.anchor();
    let result = CellResult {
        lambda,
        checkpoint: Some(id),
        anchor_distance: Some(ck.model.params().l2_distance(anchor)?),
        max_shift: Some(ck.model.params().max_abs_diff(anchor)?),
        records,
        error: None,
    };
    write_atomic(&done, &serde_json::to_vec_pretty(&result).unwrap())?;
    Ok(result)
}

impl SweepResult {
    fn load_cell(path: &Path) -> Result<CellResult> {
        let bytes = fs::read(path).at(path)?;
        serde_json::from_slice(&bytes).map_err(|e| Error::Format { path: path.to_path_buf(), msg: e.to_string() })
    }
}

/// Runs the baseline and the given λ values (the config grid when `None`),
/// then collects every completed cell of this config into a result.
pub fn run_sweep(cfg: &SweepConfig, lambdas: Option<&[f64]>) -> Result<SweepResult> {
    let base = run_baseline(cfg)?;
    let mut todo: Vec<f64> = lambdas.unwrap_or(&cfg.lambdas).to_vec();
    todo.sort_by(f64::total_cmp);
    todo.dedup();
    super::config::validate_lambdas(&todo)?;
    let threads = thread_count().min(todo.len()).max(1);
    let shared = &base;
    let mut fresh: Vec<CellResult> = Vec::with_capacity(todo.len());
    for chunk in todo.chunks(threads) {
        let results: Vec<CellResult> = std::thread::scope(|s| {
            let handles: Vec<_> = chunk.iter().map(|&l| s.spawn(move || (l, run_cell(cfg, shared, l)))).collect();
            handles
                .into_iter()
                .map(|h| {
                    let (lambda, r) = h.join().expect("sweep worker panicked");
                    r.unwrap_or_else(|e| CellResult {
                        lambda,
                        checkpoint: None,
                        anchor_distance: None,
                        max_shift: None,
                        records: Vec::new(),
                        error: Some(e.to_string()),
                    })
                })
                .collect()
        });
        fresh.extend(results);
    }
    let mut grid: Vec<f64> = cfg.lambdas.iter().chain(&todo).copied().collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mut cells = Vec::new();
    for l in grid {
        if let Some(c) = fresh.iter().find(|c| c.lambda == l) {
            cells.push(c.clone());
            continue;
        }
        let dir = cell_dir(cfg, l);
        let done = dir.join("cell.json");
        if fs::read_to_string(dir.join("hash")).ok().as_deref() == Some(cell_hash(cfg, l).as_str()) && done.exists() {
            cells.push(SweepResult::load_cell(&done)?);
        }
    }
    let result = SweepResult {
        config_hash: cfg.sweep_hash(),
        code_version: env!("CARGO_PKG_VERSION").into(),
        baseline: base.records,
        cells,
    };
    result.save(&cfg.output().join("result.json"))?;
    Ok(result)
}
