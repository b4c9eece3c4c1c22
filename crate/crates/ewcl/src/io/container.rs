//! Binary container for named f64 arrays: magic, version, a JSON header and
//! little-endian payload.

use std::fs;
use std::path::Path;

use ewcl_core::numerics::{DenseArray, ParameterStore};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, IoContext, Result};

const MAGIC: &[u8; 8] = b"EWCLTNSR";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub kind: String,
    pub meta: serde_json::Value,
    pub arrays: Vec<(String, DenseArray)>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    kind: String,
    meta: serde_json::Value,
    arrays: Vec<Entry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Entry {
    name: String,
    shape: Vec<usize>,
}

impl Container {
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            kind: self.kind.clone(),
            meta: self.meta.clone(),
            arrays: self.arrays.iter().map(|(n, a)| Entry { name: n.clone(), shape: a.shape().to_vec() }).collect(),
        };
        let header = serde_json::to_vec(&header).expect("header serializes");
        let payload: usize = self.arrays.iter().map(|(_, a)| a.len() * 8).sum();
        let mut out = Vec::with_capacity(20 + header.len() + payload);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, a) in &self.arrays {
            for v in a.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |msg: &str| Error::Format { path: path.to_path_buf(), msg: msg.to_string() };
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not a tensor container"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != VERSION {
            return Err(bad(&format!("unsupported container version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let body = &bytes[20..];
        if body.len() < hlen {
            return Err(bad("truncated header"));
        }
        let header: Header = serde_json::from_slice(&body[..hlen]).map_err(|e| bad(&e.to_string()))?;
        let mut data = &body[hlen..];
        let mut arrays = Vec::with_capacity(header.arrays.len());
        for e in header.arrays {
            let n: usize = e.shape.iter().product();
            if data.len() < n * 8 {
                return Err(bad("truncated payload"));
            }
            let values = data[..n * 8].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            data = &data[n * 8..];
            let a = DenseArray::new(e.shape, values).map_err(|err| bad(&format!("array {}: {err}", e.name)))?;
            arrays.push((e.name, a));
        }
        if !data.is_empty() {
            return Err(bad("trailing bytes after payload"));
        }
        Ok(Self { kind: header.kind, meta: header.meta, arrays })
    }

    /// Writes to a sibling temp file and renames it into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path, kind: &str) -> Result<Self> {
        let bytes = fs::read(path).at(path)?;
        let c = Self::from_bytes(&bytes, path)?;
        if c.kind != kind {
            return Err(Error::Format { path: path.to_path_buf(), msg: format!("expected a {kind}, found a {}", c.kind) });
        }
        Ok(c)
    }

    /// Arrays stored under `prefix/`, rebuilt into a store in file order.
    pub fn group(&self, prefix: &str) -> Result<Option<ParameterStore>> {
        let mut store = ParameterStore::new();
        for (name, a) in &self.arrays {
            if let Some(rest) = name.strip_prefix(prefix).and_then(|r| r.strip_prefix('/')) {
                store.insert(rest, a.clone())?;
            }
        }
        Ok((store.len() > 0).then_some(store))
    }

    pub fn push_group(&mut self, prefix: &str, store: &ParameterStore) {
        for (name, a) in store.iter() {
            self.arrays.push((format!("{prefix}/{name}"), a.clone()));
        }
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).at(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    fs::write(&tmp, bytes).at(&tmp)?;
    fs::rename(&tmp, path).at(path)
}

/// SHA-256 over parameter names, shapes and values.
pub fn params_hash(params: &ParameterStore) -> String {
    let mut h = Sha256::new();
    for (name, a) in params.iter() {
        h.update((name.len() as u64).to_le_bytes());
        h.update(name.as_bytes());
        for &d in a.shape() {
            h.update((d as u64).to_le_bytes());
        }
        for v in a.data() {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
