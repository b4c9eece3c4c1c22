use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{tokenize, Corpus, Token, PAD};
use crate::error::{contract, Result};

/// Packs the corpus into fixed-length chunks.
///
/// Documents are BOS-prefixed and concatenated, then cut into runs of
/// `chunk_len` tokens; the tail of the final chunk is filled with PAD.
pub fn chunk_corpus(corpus: &Corpus, chunk_len: usize) -> Vec<Vec<Token>> {
    let stream: Vec<Token> = corpus.documents().iter().flat_map(|d| tokenize(d, true, false)).collect();
    stream
        .chunks(chunk_len)
        .map(|c| {
            let mut v = c.to_vec();
            v.resize(chunk_len, PAD);
            v
        })
        .collect()
}

/// Endless, seeded stream of training batches over a corpus.
///
/// Each epoch visits every chunk once in an order drawn from `(seed, epoch)`.
/// The final batch of an epoch may be smaller than `batch_size`.
#[derive(Debug, Clone)]
pub struct BatchStream {
    chunks: Vec<Vec<Token>>,
    batch_size: usize,
    seed: u64,
    epoch: u64,
    order: Vec<usize>,
    cursor: usize,
    consumed: u64,
}

impl BatchStream {
    /// Chunks are `context_length` tokens: a model input of
    /// `context_length - 1` tokens and as many targets.
    pub fn new(corpus: &Corpus, context_length: usize, batch_size: usize, seed: u64) -> Result<Self> {
        if batch_size == 0 {
            return Err(contract("batch_size must be at least 1"));
        }
        if context_length < 2 {
            return Err(contract("context_length must be at least 2"));
        }
        let chunks = chunk_corpus(corpus, context_length);
        let mut s = Self { chunks, batch_size, seed, epoch: 0, order: Vec::new(), cursor: 0, consumed: 0 };
        s.order = s.epoch_order(0);
        Ok(s)
    }

    fn epoch_order(&self, epoch: u64) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(epoch);
        let mut order: Vec<usize> = (0..self.chunks.len()).collect();
        order.shuffle(&mut rng);
        order
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.chunks.len().div_ceil(self.batch_size)
    }

    pub fn num_chunks(&self) -> usize {
        self.chunks.len()
    }

    /// Batches handed out so far.
    pub fn position(&self) -> u64 {
        self.consumed
    }

    /// Repositions the stream as if `batches` batches had been consumed.
    pub fn seek(&mut self, batches: u64) {
        let per = self.batches_per_epoch() as u64;
        let epoch = batches / per;
        if epoch != self.epoch || self.order.is_empty() {
            self.order = self.epoch_order(epoch);
            self.epoch = epoch;
        }
        self.cursor = ((batches % per) as usize) * self.batch_size;
        self.consumed = batches;
    }

    pub fn next_batch(&mut self) -> Vec<Vec<Token>> {
        if self.cursor >= self.order.len() {
            self.epoch += 1;
            self.order = self.epoch_order(self.epoch);
            self.cursor = 0;
        }
        let end = (self.cursor + self.batch_size).min(self.order.len());
        let batch = self.order[self.cursor..end].iter().map(|&i| self.chunks[i].clone()).collect();
        self.cursor = end;
        self.consumed += 1;
        batch
    }
}

impl Iterator for BatchStream {
    type Item = Vec<Vec<Token>>;

    fn next(&mut self) -> Option<Self::Item> {
        Some(self.next_batch())
    }
}
