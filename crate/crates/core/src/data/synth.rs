//! Synthetic "languages": fixed order-2 word Markov grammars.
//!
//! Grammar `A` builds words that alternate vowels and consonants and start
//! and end with a vowel (`ekabo`). Grammar `B` builds words from its own
//! letters (`qxfw`). The only shared bytes are space and punctuation, so the
//! only shared bigrams come from punctuation followed by a space.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Corpus, MCItem, QAPair};
use crate::error::{contract, Result};

const VOWELS: &[u8] = b"aeiou";
const CONSONANTS: &[u8] = b"bdgklmnprstvz";
const B_LETTERS: &[u8] = b"cfhjqwxy";
const INVENTORY: usize = 40;
const BRANCHING: [f64; 3] = [0.6, 0.3, 0.1];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum GrammarId {
    A,
    B,
}

impl GrammarId {
    pub fn tag(self) -> &'static str {
        match self {
            GrammarId::A => "A",
            GrammarId::B => "B",
        }
    }

    fn grammar_seed(self) -> u64 {
        match self {
            GrammarId::A => 0x00A1_1CE5,
            GrammarId::B => 0x0000_0B0B,
        }
    }
}

/// A fixed word inventory plus order-2 successor table.
#[derive(Debug, Clone)]
pub struct Grammar {
    id: GrammarId,
    words: Vec<String>,
    /// Indexed by `prev2 * (n + 1) + prev1`, where `n` is the start marker.
    successors: Vec<[usize; 3]>,
}

impl Grammar {
    pub fn new(id: GrammarId) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(id.grammar_seed());
        let mut seen = BTreeSet::new();
        let mut words = Vec::with_capacity(INVENTORY);
        while words.len() < INVENTORY {
            let w = match id {
                GrammarId::A => {
                    let pairs = rng.random_range(1..=3);
                    let mut w = String::new();
                    w.push(*VOWELS.choose(&mut rng).unwrap() as char);
                    for _ in 0..pairs {
                        w.push(*CONSONANTS.choose(&mut rng).unwrap() as char);
                        w.push(*VOWELS.choose(&mut rng).unwrap() as char);
                    }
                    w
                }
                GrammarId::B => {
                    let len = rng.random_range(2..=5);
                    (0..len).map(|_| *B_LETTERS.choose(&mut rng).unwrap() as char).collect()
                }
            };
            if seen.insert(w.clone()) {
                words.push(w);
            }
        }
        let states = (INVENTORY + 1) * (INVENTORY + 1);
        let mut all: Vec<usize> = (0..INVENTORY).collect();
        let successors = (0..states)
            .map(|_| {
                all.shuffle(&mut rng);
                [all[0], all[1], all[2]]
            })
            .collect();
        Self { id, words, successors }
    }

    pub fn id(&self) -> GrammarId {
        self.id
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    fn next_word<R: Rng>(&self, prev2: usize, prev1: usize, rng: &mut R) -> usize {
        let succ = &self.successors[prev2 * (INVENTORY + 1) + prev1];
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, w) in BRANCHING.iter().enumerate() {
            acc += w;
            if u < acc {
                return succ[i];
            }
        }
        succ[2]
    }

    /// Word indices of one sentence of `len` words.
    fn sentence_words<R: Rng>(&self, len: usize, rng: &mut R) -> Vec<usize> {
        let (mut p2, mut p1) = (INVENTORY, INVENTORY);
        let mut out = Vec::with_capacity(len);
        for _ in 0..len {
            let w = self.next_word(p2, p1, rng);
            out.push(w);
            p2 = p1;
            p1 = w;
        }
        out
    }

    /// Continues a sentence after `prefix` for `n` more words.
    fn continue_words<R: Rng>(&self, prefix: &[usize], n: usize, rng: &mut R) -> Vec<usize> {
        let mut p2 = if prefix.len() >= 2 { prefix[prefix.len() - 2] } else { INVENTORY };
        let mut p1 = prefix.last().copied().unwrap_or(INVENTORY);
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let w = self.next_word(p2, p1, rng);
            out.push(w);
            p2 = p1;
            p1 = w;
        }
        out
    }

    fn render(&self, words: &[usize], commas: &[bool], end: Option<char>) -> String {
        let mut s = String::new();
        for (i, &w) in words.iter().enumerate() {
            if i > 0 {
                s.push(' ');
            }
            s.push_str(&self.words[w]);
            if commas.get(i).copied().unwrap_or(false) && i + 1 < words.len() {
                s.push(',');
            }
        }
        if let Some(c) = end {
            s.push(c);
        }
        s
    }

    /// One sentence, optionally forcing the terminal punctuation.
    pub fn sentence<R: Rng>(&self, rng: &mut R, end: Option<char>) -> String {
        let len = rng.random_range(4..=9);
        let words = self.sentence_words(len, rng);
        let commas: Vec<bool> = (0..len).map(|_| rng.random_bool(0.08)).collect();
        let end = end.unwrap_or_else(|| if rng.random_bool(0.8) { '.' } else { '?' });
        self.render(&words, &commas, Some(end))
    }

    pub fn document<R: Rng>(&self, rng: &mut R) -> String {
        let n = rng.random_range(2..=6);
        let mut doc = String::new();
        for i in 0..n {
            if i > 0 {
                doc.push(' ');
            }
            doc.push_str(&self.sentence(rng, None));
        }
        doc
    }
}

/// Generates `n_docs` documents of the given grammar. Deterministic for a fixed seed.
pub fn synth_corpus(grammar: GrammarId, n_docs: usize, seed: u64) -> Result<Corpus> {
    if n_docs == 0 {
        return Err(contract("synth_corpus: n_docs must be at least 1"));
    }
    let g = Grammar::new(grammar);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let docs = (0..n_docs).map(|_| g.document(&mut rng).into_bytes()).collect();
    Corpus::new(format!("synth-{}-{seed}", grammar.tag()), grammar.tag(), docs)
}

/// Distinct byte-bigram sets of two corpora: |A ∩ B| / |A ∪ B|.
pub fn bigram_overlap(a: &Corpus, b: &Corpus) -> f64 {
    let set = |c: &Corpus| -> BTreeSet<(u8, u8)> {
        c.documents().iter().flat_map(|d| d.windows(2).map(|w| (w[0], w[1]))).collect()
    };
    let (sa, sb) = (set(a), set(b));
    let union = sa.union(&sb).count();
    if union == 0 {
        return 0.0;
    }
    sa.intersection(&sb).count() as f64 / union as f64
}

/// Flavour of synthetic multiple-choice item.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McKind {
    /// Pick the grammatical continuation of a sentence prefix. Distractors are
    /// a reordering of the gold words, random in-language words, and words of
    /// the other language.
    Continuation,
    /// Pick the correctly ordered sentence among word-shuffled copies.
    WordOrder,
}

/// Synthetic multiple-choice items for `lang`, with `other` supplying foreign distractors.
pub fn synth_mc_items(lang: &Grammar, other: &Grammar, kind: McKind, n: usize, seed: u64) -> Vec<MCItem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let item = match kind {
            McKind::Continuation => continuation_item(lang, other, &mut rng),
            McKind::WordOrder => word_order_item(lang, &mut rng),
        };
        if let Some(item) = item.filter(|i| i.validate().is_ok()) {
            out.push(item);
        }
    }
    out
}

fn continuation_item<R: Rng>(lang: &Grammar, other: &Grammar, rng: &mut R) -> Option<MCItem> {
    let prefix_len = rng.random_range(3..=5);
    let prefix = lang.sentence_words(prefix_len, rng);
    let commas: Vec<bool> = (0..prefix_len).map(|_| rng.random_bool(0.08)).collect();
    let gold = lang.continue_words(&prefix, 3, rng);
    let mut shuffled = gold.clone();
    shuffled.shuffle(rng);
    if shuffled == gold {
        shuffled.rotate_left(1);
    }
    let random: Vec<usize> = (0..3).map(|_| rng.random_range(0..INVENTORY)).collect();
    let foreign = other.sentence_words(3, rng);
    let tail: Vec<bool> = (0..3).map(|_| rng.random_bool(0.08)).collect();
    let end = if rng.random_bool(0.8) { '.' } else { '?' };
    let mut choices = [
        lang.render(&gold, &tail, Some(end)),
        lang.render(&shuffled, &tail, Some(end)),
        lang.render(&random, &tail, Some(end)),
        other.render(&foreign, &tail, Some(end)),
    ]
    .to_vec();
    let gold_text = choices[0].clone();
    choices.shuffle(rng);
    let gold_index = choices.iter().position(|c| *c == gold_text)?;
    Some(MCItem { question: lang.render(&prefix, &commas, None), choices, gold_index })
}

fn word_order_item<R: Rng>(lang: &Grammar, rng: &mut R) -> Option<MCItem> {
    let len = rng.random_range(4..=6);
    let words = lang.sentence_words(len, rng);
    let gold_text = lang.render(&words, &[], Some('.'));
    let mut choices = alloc::vec![gold_text.clone()];
    let mut guard = 0;
    while choices.len() < 4 && guard < 50 {
        guard += 1;
        let mut w = words.clone();
        w.shuffle(rng);
        let t = lang.render(&w, &[], Some('.'));
        if !choices.contains(&t) {
            choices.push(t);
        }
    }
    if choices.len() < 4 {
        return None;
    }
    choices.shuffle(rng);
    let gold_index = choices.iter().position(|c| *c == gold_text)?;
    let context = lang.sentence(rng, Some('.'));
    Some(MCItem { question: context, choices, gold_index })
}

/// Question/answer pairs: a question-terminated sentence followed by a statement.
pub fn synth_qa_pairs(lang: &Grammar, n: usize, seed: u64) -> Vec<QAPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| QAPair { question: lang.sentence(&mut rng, Some('?')), answer: lang.sentence(&mut rng, Some('.')) })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_for_fixed_seed() {
        assert_eq!(synth_corpus(GrammarId::A, 20, 7).unwrap(), synth_corpus(GrammarId::A, 20, 7).unwrap());
        assert_ne!(synth_corpus(GrammarId::A, 20, 7).unwrap(), synth_corpus(GrammarId::A, 20, 8).unwrap());
    }

    #[test]
    fn zero_documents_rejected() {
        assert!(synth_corpus(GrammarId::B, 0, 1).is_err());
    }

    #[test]
    fn inventories_are_disjoint() {
        let (a, b) = (Grammar::new(GrammarId::A), Grammar::new(GrammarId::B));
        assert!(a.words().iter().all(|w| !b.words().contains(w)));
        assert!(a.words().iter().all(|w| w.starts_with(|c| "aeiou".contains(c))));
        assert!(b.words().iter().all(|w| w.chars().all(|c| !"aeiou".contains(c))));
    }

    #[test]
    fn mc_items_are_valid() {
        let (a, b) = (Grammar::new(GrammarId::A), Grammar::new(GrammarId::B));
        for kind in [McKind::Continuation, McKind::WordOrder] {
            let items = synth_mc_items(&a, &b, kind, 25, 3);
            assert_eq!(items.len(), 25);
            assert!(items.iter().all(|i| i.validate().is_ok() && i.choices.len() == 4));
        }
        let qa = synth_qa_pairs(&b, 5, 1);
        assert!(qa.iter().all(|p| p.validate().is_ok() && p.question.ends_with('?')));
    }
}
