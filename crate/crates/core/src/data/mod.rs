//! Byte tokenization, corpora, synthetic two-language generation, batching and
//! benchmark record types.

mod records;
mod template;
mod stream;
pub mod synth;
mod tokenizer;

pub use records::{MCItem, QAPair};
pub use template::{fit_to_context, PromptTemplate};
pub use stream::{chunk_corpus, BatchStream};
pub use synth::{bigram_overlap, synth_corpus, synth_mc_items, synth_qa_pairs, Grammar, GrammarId, McKind};
pub use tokenizer::{detokenize, tokenize, Token, BOS, EOS, PAD, VOCAB_SIZE};

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{contract, Result};

/// A named collection of raw-byte documents in one language.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    name: String,
    language: String,
    documents: Vec<Vec<u8>>,
}

impl Corpus {
    /// Empty documents are dropped; a corpus with no remaining documents is rejected.
    pub fn new(name: impl Into<String>, language: impl Into<String>, documents: Vec<Vec<u8>>) -> Result<Self> {
        let documents: Vec<Vec<u8>> = documents.into_iter().filter(|d| !d.is_empty()).collect();
        if documents.is_empty() {
            return Err(contract("a corpus needs at least one non-empty document"));
        }
        Ok(Self { name: name.into(), language: language.into(), documents })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn language(&self) -> &str {
        &self.language
    }

    pub fn documents(&self) -> &[Vec<u8>] {
        &self.documents
    }

    pub fn total_bytes(&self) -> usize {
        self.documents.iter().map(Vec::len).sum()
    }
}
