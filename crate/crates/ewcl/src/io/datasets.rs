use std::fs;
use std::path::Path;

use ewcl_core::data::{Corpus, MCItem, QAPair};
use ewcl_core::eval::EvalRecord;
use serde::de::DeserializeOwned;
use serde::Serialize;

use super::container::write_atomic;
use crate::error::{Error, IoContext, Result};

fn read_jsonl<T: DeserializeOwned>(path: &Path, check: impl Fn(&T) -> ewcl_core::Result<()>) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).at(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line_err = |msg: String| Error::Line { path: path.to_path_buf(), line: i + 1, msg };
        let item: T = serde_json::from_str(line).map_err(|e| line_err(e.to_string()))?;
        check(&item).map_err(|e| line_err(e.to_string()))?;
        out.push(item);
    }
    Ok(out)
}

fn to_jsonl<T: Serialize>(items: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item).expect("record serializes");
        out.push(b'\n');
    }
    out
}

/// Multiple-choice items, one JSON object per line.
pub fn load_mc(path: &Path) -> Result<Vec<MCItem>> {
    read_jsonl(path, MCItem::validate)
}

pub fn save_mc(path: &Path, items: &[MCItem]) -> Result<()> {
    write_atomic(path, &to_jsonl(items))
}

pub fn load_qa(path: &Path) -> Result<Vec<QAPair>> {
    read_jsonl(path, QAPair::validate)
}

pub fn save_qa(path: &Path, pairs: &[QAPair]) -> Result<()> {
    write_atomic(path, &to_jsonl(pairs))
}

pub fn load_records(path: &Path) -> Result<Vec<EvalRecord>> {
    read_jsonl(path, EvalRecord::validate)
}

pub fn save_records(path: &Path, records: &[EvalRecord]) -> Result<()> {
    write_atomic(path, &to_jsonl(records))
}

/// Every `.txt` file in `dir`, in file-name order, as one document each.
pub fn load_corpus_dir(dir: &Path, language: &str) -> Result<Corpus> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .at(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()
        .at(dir)?;
    files.retain(|p| p.extension().is_some_and(|e| e == "txt"));
    files.sort();
    let docs = files.iter().map(|p| fs::read(p).at(p)).collect::<Result<Vec<_>>>()?;
    Ok(Corpus::new(dir.display().to_string(), language, docs)?)
}

/// Writes one `.txt` file per document.
pub fn save_corpus_dir(dir: &Path, corpus: &Corpus) -> Result<()> {
    fs::create_dir_all(dir).at(dir)?;
    let width = corpus.documents().len().to_string().len();
    for (i, doc) in corpus.documents().iter().enumerate() {
        let p = dir.join(format!("{i:0width$}.txt"));
        fs::write(&p, doc).at(&p)?;
    }
    Ok(())
}
