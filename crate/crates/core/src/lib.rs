//! Continual-learning core for compact autoregressive language models.
//!
//! Everything in this crate is pure computation over `alloc` collections:
//! a tape-based reverse-mode autodiff engine ([`numerics`]), a byte-level
//! decoder-only transformer ([`model`]), corpus and benchmark-record
//! handling ([`data`]), the continual-learning regularizers and importance
//! estimators ([`continual`]), an AdamW training loop ([`trainer`]) and the
//! fluency / knowledge measurements ([`eval`]).
//!
//! File formats, the experiment runner and the command-line interface live in
//! the std companion crate `ewcl`.
#![no_std]

extern crate alloc;

pub mod continual;
pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod numerics;
pub mod trainer;

pub use error::{Error, Result};
