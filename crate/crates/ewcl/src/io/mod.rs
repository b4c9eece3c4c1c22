//! On-disk formats: tensor containers, checkpoints, Fisher artifacts,
//! JSON-lines datasets, corpora and training logs.

mod checkpoint;
mod container;
mod datasets;
mod log;

pub use checkpoint::{Checkpoint, FisherArtifact};
pub use container::{params_hash, sha256_hex, write_atomic, Container};
pub use datasets::{load_corpus_dir, load_mc, load_qa, load_records, save_corpus_dir, save_mc, save_qa, save_records};
pub use log::{step_line, TrainLogger};
