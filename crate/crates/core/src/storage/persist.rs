//! On-disk store layout.
//!
//! ```text
//! <dir>/index.json                      store-level index
//! <dir>/buffer_<id:08>/manifest.json    one per stored buffer
//! <dir>/buffer_<id:08>/frame_<id:08>.jpg encoded payloads (real-pixel mode)
//! ```
//!
//! Both files are JSON objects `{"schema":..,"checksum":..,"body":{..}}` where
//! `checksum` is the SHA-256 (hex) of the exact `body` text.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use sha2::{Digest, Sha256};

use super::{EvictionEntry, Policy, StorageState, StoredBuffer};
use crate::buffering::FrameBuffer;
use crate::error::{Error, Result};

pub const INDEX_FILE: &str = "index.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const INDEX_SCHEMA: &str = "edr.store/1";
pub const MANIFEST_SCHEMA: &str = "edr.manifest/1";

#[derive(Serialize, Deserialize)]
struct IndexEntry {
    id: u64,
    value: f64,
    cost: f64,
    frames: usize,
}

#[derive(Serialize, Deserialize)]
struct IndexBody {
    policy: Policy,
    capacity: Option<f64>,
    total_cost: f64,
    buffers: Vec<IndexEntry>,
    /// Heap layout (priority) or arrival order (FIFO).
    order: Vec<u64>,
    eviction_log: Vec<EvictionEntry>,
}

#[derive(Serialize, Deserialize)]
struct ManifestBody {
    buffer: FrameBuffer,
    /// Payload file per frame; `None` when no pixels are kept.
    payloads: Vec<Option<String>>,
}

#[derive(Deserialize)]
struct Signed<'a> {
    schema: String,
    checksum: String,
    #[serde(borrow)]
    body: &'a RawValue,
}

fn digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn signed(schema: &str, body: &impl Serialize) -> Result<String> {
    let text = serde_json::to_string(body)?;
    Ok(format!(
        "{{\"schema\":\"{schema}\",\"checksum\":\"{}\",\"body\":{text}}}\n",
        digest(&text)
    ))
}

fn open_signed<'a, T: Deserialize<'a>>(text: &'a str, schema: &str) -> std::result::Result<T, String> {
    let s: Signed = serde_json::from_str(text).map_err(|e| e.to_string())?;
    if s.schema != schema {
        return Err(format!("schema '{}', expected '{schema}'", s.schema));
    }
    if digest(s.body.get()) != s.checksum {
        return Err("checksum mismatch".into());
    }
    serde_json::from_str(s.body.get()).map_err(|e| e.to_string())
}

fn buffer_dir(dir: &Path, id: u64) -> PathBuf {
    dir.join(format!("buffer_{id:08}"))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Write the store under `dir`, creating it if needed. Existing buffer
/// directories for ids no longer stored are left alone.
pub fn persist(state: &StorageState, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for b in state.buffers() {
        let bdir = buffer_dir(dir, b.id());
        fs::create_dir_all(&bdir).map_err(|e| Error::io(&bdir, e))?;
        let mut names = Vec::with_capacity(b.buffer.len());
        for (i, f) in b.buffer.frames.iter().enumerate() {
            match b.payloads.get(i).filter(|p| !p.is_empty()) {
                Some(bytes) => {
                    let name = format!("frame_{:08}.jpg", f.frame_id());
                    write(&bdir.join(&name), bytes)?;
                    names.push(Some(name));
                }
                None => names.push(None),
            }
        }
        let body = ManifestBody {
            buffer: b.buffer.clone(),
            payloads: names,
        };
        write(&bdir.join(MANIFEST_FILE), signed(MANIFEST_SCHEMA, &body)?.as_bytes())?;
    }
    let index = IndexBody {
        policy: state.policy(),
        capacity: state.capacity(),
        total_cost: state.total_cost(),
        buffers: state
            .buffers()
            .map(|b| IndexEntry {
                id: b.id(),
                value: b.buffer.value,
                cost: b.buffer.cost,
                frames: b.buffer.len(),
            })
            .collect(),
        order: state.order(),
        eviction_log: state.eviction_log().to_vec(),
    };
    write(&dir.join(INDEX_FILE), signed(INDEX_SCHEMA, &index)?.as_bytes())
}

pub fn load(dir: impl AsRef<Path>) -> Result<StorageState> {
    let dir = dir.as_ref();
    let index_path = dir.join(INDEX_FILE);
    let text = fs::read_to_string(&index_path).map_err(|e| Error::io(&index_path, e))?;
    let index: IndexBody = open_signed(&text, INDEX_SCHEMA).map_err(|reason| Error::Parse {
        path: index_path.clone(),
        line: 1,
        reason,
    })?;

    let mut entries = BTreeMap::new();
    for entry in &index.buffers {
        let id = entry.id;
        let corrupt = |reason: String| Error::CorruptManifest { buffer_id: id, reason };
        let bdir = buffer_dir(dir, id);
        let mpath = bdir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&mpath).map_err(|e| corrupt(format!("{}: {e}", mpath.display())))?;
        let body: ManifestBody = open_signed(&text, MANIFEST_SCHEMA).map_err(corrupt)?;
        if body.buffer.index != id || body.buffer.value != entry.value || body.buffer.cost != entry.cost {
            return Err(corrupt("manifest disagrees with the store index".into()));
        }
        if body.payloads.len() != body.buffer.len() {
            return Err(corrupt("payload list length differs from frame count".into()));
        }
        let mut payloads = Vec::new();
        if body.payloads.iter().any(Option::is_some) {
            for name in &body.payloads {
                payloads.push(match name {
                    Some(n) => {
                        let p = bdir.join(n);
                        fs::read(&p).map_err(|e| corrupt(format!("{}: {e}", p.display())))?
                    }
                    None => Vec::new(),
                });
            }
        }
        entries.insert(
            id,
            StoredBuffer {
                buffer: body.buffer,
                payloads,
            },
        );
    }
    StorageState::from_parts(
        index.policy,
        index.capacity,
        entries,
        index.order,
        index.total_cost,
        index.eviction_log,
    )
}
