//! Perplexity, multiple-choice accuracy and judge perplexity.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::data::{fit_to_context, tokenize, MCItem, PromptTemplate, QAPair, Token, BOS, EOS, PAD};
use crate::error::{contract, Error, Result};
use crate::model::CausalLM;

/// Kind of measurement in an [`EvalRecord`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Metric {
    Ppl,
    McAcc,
    JudgePpl,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Ppl => "ppl",
            Metric::McAcc => "mc_acc",
            Metric::JudgePpl => "judge_ppl",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ppl" => Some(Metric::Ppl),
            "mc_acc" => Some(Metric::McAcc),
            "judge_ppl" => Some(Metric::JudgePpl),
            _ => None,
        }
    }
}

/// One benchmark measurement.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct EvalRecord {
    pub metric: Metric,
    pub dataset: String,
    /// Language or task the dataset belongs to.
    pub tag: String,
    /// Regularization strength of the run; `None` for the pre-task-B baseline.
    pub lambda: Option<f64>,
    pub checkpoint: String,
    pub value: f64,
    pub n_items: usize,
}

impl EvalRecord {
    pub fn validate(&self) -> Result<()> {
        let ok = match self.metric {
            Metric::Ppl | Metric::JudgePpl => self.value > 0.0 && self.value.is_finite(),
            Metric::McAcc => (0.0..=1.0).contains(&self.value),
        };
        if !ok {
            return Err(Error::Validation(format!("{} value {} out of range", self.metric.name(), self.value)));
        }
        Ok(())
    }
}

/// How a multiple-choice score is normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ChoiceNorm {
    None,
    #[default]
    PerToken,
}

/// What part of a QA pair is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum QaMode {
    /// Question and answer as one text.
    #[default]
    Joint,
    /// Answer tokens only, conditioned on the question.
    AnswerGiven,
}

pub fn qa_to_text(pair: &QAPair) -> String {
    format!("{}\n{}", pair.question, pair.answer)
}

/// Total NLL and prediction count of one BOS-prefixed text, chunked without overlap.
fn text_nll(model: &CausalLM, text: &[u8]) -> Result<(f64, usize)> {
    let tokens = tokenize(text, true, false);
    let mut nll = 0.0;
    let mut count = 0;
    for chunk in tokens.chunks(model.config().context_length) {
        if chunk.len() < 2 {
            continue;
        }
        let lp = model.sequence_logprob(&chunk[..1], &chunk[1..])?;
        nll -= lp;
        count += chunk.len() - 1;
    }
    Ok((nll, count))
}

/// Mean over texts of per-text token perplexity.
pub fn text_perplexity<T: AsRef<[u8]>>(model: &CausalLM, texts: &[T]) -> Result<f64> {
    if texts.is_empty() {
        return Err(contract("text_perplexity: no texts"));
    }
    let mut total = 0.0;
    for (i, text) in texts.iter().enumerate() {
        let text = text.as_ref();
        if text.is_empty() {
            return Err(contract(format!("text_perplexity: text {i} is empty")));
        }
        let (nll, count) = text_nll(model, text)?;
        total += libm::exp(nll / count as f64);
    }
    Ok(total / texts.len() as f64)
}

/// Perplexity of QA pairs, jointly or of the answer given the question.
pub fn qa_perplexity(model: &CausalLM, pairs: &[QAPair], mode: QaMode) -> Result<f64> {
    if pairs.is_empty() {
        return Err(contract("qa_perplexity: no pairs"));
    }
    match mode {
        QaMode::Joint => {
            let texts: Vec<String> = pairs.iter().map(qa_to_text).collect();
            text_perplexity(model, &texts)
        }
        QaMode::AnswerGiven => {
            let mut total = 0.0;
            for pair in pairs {
                pair.validate()?;
                let prompt = tokenize(format!("{}\n", pair.question).as_bytes(), true, false);
                let answer = tokenize(pair.answer.as_bytes(), false, false);
                total += conditional_perplexity(model, &prompt, &answer)?;
            }
            Ok(total / pairs.len() as f64)
        }
    }
}

fn conditional_perplexity(model: &CausalLM, prompt: &[Token], continuation: &[Token]) -> Result<f64> {
    let (p, c) = fit_to_context(prompt, continuation, model.config().context_length);
    let lp = model.sequence_logprob(&p, &c)?;
    Ok(libm::exp(-lp / c.len() as f64))
}

/// Per-choice scores of one item; higher is better.
pub fn choice_scores(model: &CausalLM, item: &MCItem, template: PromptTemplate, norm: ChoiceNorm) -> Result<Vec<f64>> {
    item.validate()?;
    let prompt = template.prompt_tokens(item);
    item.choices
        .iter()
        .map(|choice| {
            let cont = tokenize(choice.as_bytes(), false, false);
            if cont.is_empty() {
                return Err(Error::Validation("empty choice".into()));
            }
            let (p, c) = fit_to_context(&prompt, &cont, model.config().context_length);
            let lp = model.sequence_logprob(&p, &c)?;
            Ok(match norm {
                ChoiceNorm::None => lp,
                ChoiceNorm::PerToken => lp / c.len() as f64,
            })
        })
        .collect()
}

/// Index of the best score; the lowest index wins ties.
pub fn predict(scores: &[f64]) -> usize {
    crate::model::argmax(scores)
}

/// Fraction of items whose top-scoring choice is the gold one.
pub fn mc_accuracy(model: &CausalLM, items: &[MCItem], template: PromptTemplate, norm: ChoiceNorm) -> Result<f64> {
    if items.is_empty() {
        return Err(contract("mc_accuracy: no items"));
    }
    let mut correct = 0usize;
    for item in items {
        let scores = choice_scores(model, item, template, norm)?;
        if predict(&scores) == item.gold_index {
            correct += 1;
        }
    }
    Ok(correct as f64 / items.len() as f64)
}

/// Judge perplexity of greedy answers, and how many answers came out empty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JudgeResult {
    pub perplexity: f64,
    pub scored: usize,
    pub empty: usize,
}

/// The subject's greedy answer to `question`, cut at the first special token.
pub fn answer(model: &CausalLM, question: &str, max_new: usize) -> Result<Vec<Token>> {
    let prompt = judge_prompt(question);
    let (prompt, _) = fit_to_context(&prompt, &[], model.config().context_length);
    let out = model.generate(&prompt, max_new)?;
    let end = out.iter().position(|&t| t == EOS || t == BOS || t == PAD).unwrap_or(out.len());
    Ok(out[..end].to_vec())
}

fn judge_prompt(question: &str) -> Vec<Token> {
    tokenize(format!("{question}\n").as_bytes(), true, false)
}

pub fn judge_perplexity<S: AsRef<str>>(
    subject: &CausalLM,
    judge: &CausalLM,
    questions: &[S],
    max_new: usize,
) -> Result<JudgeResult> {
    if max_new == 0 {
        return Err(contract("judge_perplexity: max_new must be at least 1"));
    }
    let mut total = 0.0;
    let mut scored = 0;
    let mut empty = 0;
    for q in questions {
        let generated = answer(subject, q.as_ref(), max_new)?;
        if generated.is_empty() {
            empty += 1;
            continue;
        }
        total += conditional_perplexity(judge, &judge_prompt(q.as_ref()), &generated)?;
        scored += 1;
    }
    if scored == 0 {
        return Err(Error::Evaluation(format!("all {empty} generations were empty")));
    }
    Ok(JudgeResult { perplexity: total / scored as f64, scored, empty })
}
