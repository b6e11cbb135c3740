//! On-disk parameter snapshots: a JSON manifest next to one little-endian
//! `f32` blob holding every tensor back to back in manifest order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AutodiffError, ParamStore, Tensor};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const BLOB_FILE: &str = "tensors.bin";
const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the blob.
    pub offset: usize,
    pub frozen: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub tensors: Vec<ManifestEntry>,
    /// Free-form description of what the tensors are (architecture, widths,
    /// observation layout, ...).
    pub metadata: serde_json::Value,
}

/// Parameters plus the metadata needed to rebuild the networks that use them.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ParamStore,
    pub metadata: serde_json::Value,
}

/// Write `checkpoint` into directory `dir` (created if missing).
pub fn save_checkpoint(dir: &Path, checkpoint: &Checkpoint) -> Result<(), AutodiffError> {
    fs::create_dir_all(dir)?;
    let mut blob = Vec::with_capacity(checkpoint.params.num_scalars() * 4);
    let mut tensors = Vec::with_capacity(checkpoint.params.len());
    for (name, t) in checkpoint.params.iter() {
        tensors.push(ManifestEntry {
            name: name.clone(),
            shape: t.shape().to_vec(),
            offset: blob.len(),
            frozen: checkpoint.params.is_frozen(name),
        });
        for &v in t.data() {
            blob.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let manifest = CheckpointManifest {
        format_version: FORMAT_VERSION,
        tensors,
        metadata: checkpoint.metadata.clone(),
    };
    fs::write(dir.join(BLOB_FILE), blob)?;
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint, AutodiffError> {
    let manifest: CheckpointManifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE))?)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(AutodiffError::Checkpoint(format!(
            "unsupported format version {}",
            manifest.format_version
        )));
    }
    let blob = fs::read(dir.join(BLOB_FILE))?;
    let mut params = ParamStore::new();
    for e in &manifest.tensors {
        let n: usize = e.shape.iter().product();
        let end = e.offset + 4 * n;
        let bytes = blob
            .get(e.offset..end)
            .ok_or_else(|| AutodiffError::Checkpoint(format!("tensor `{}` runs past the end of the blob", e.name)))?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        params.insert(e.name.clone(), Tensor::new(e.shape.clone(), data)?);
        if e.frozen {
            params.freeze(&e.name);
        }
    }
    Ok(Checkpoint {
        params,
        metadata: manifest.metadata,
    })
}
