use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CouplingError;
use crate::Real;

/// Name of the JSON index inside a checkpoint directory.
pub const CHECKPOINT_INDEX: &str = "index.json";
const DATA_FILE: &str = "tensors.bin";

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self, CouplingError> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(CouplingError::Shape(format!(
                "shape {shape:?} holds {numel} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }
}

/// Named tensors of one model snapshot.
pub type Checkpoint<T> = BTreeMap<String, Tensor<T>>;

/// Element-wise mean over checkpoints that share names and shapes.
pub fn average_checkpoints<T: Real>(checkpoints: &[Checkpoint<T>]) -> Result<Checkpoint<T>, CouplingError> {
    let (first, rest) = checkpoints
        .split_first()
        .ok_or_else(|| CouplingError::Checkpoint("no checkpoints to average".into()))?;
    for (i, ckpt) in rest.iter().enumerate() {
        if ckpt.len() != first.len() || ckpt.keys().zip(first.keys()).any(|(a, b)| a != b) {
            return Err(CouplingError::Checkpoint(format!(
                "checkpoint {} has a different set of tensor names",
                i + 1
            )));
        }
        for (name, t) in ckpt {
            if t.shape != first[name].shape {
                return Err(CouplingError::Checkpoint(format!(
                    "{name}: shape {:?} in checkpoint {} vs {:?} in checkpoint 0",
                    t.shape,
                    i + 1,
                    first[name].shape
                )));
            }
        }
    }
    let k = T::from_usize_lossy(checkpoints.len());
    Ok(first
        .iter()
        .map(|(name, t)| {
            let mut sum = t.data.clone();
            for ckpt in rest {
                for (acc, &v) in sum.iter_mut().zip(&ckpt[name].data) {
                    *acc += v;
                }
            }
            let data = sum.into_iter().map(|v| v / k).collect();
            (name.clone(), Tensor { shape: t.shape.clone(), data })
        })
        .collect())
}

#[derive(Serialize, Deserialize)]
struct IndexEntry {
    shape: Vec<usize>,
    dtype: String,
    file: String,
    offset: u64,
}

#[derive(Serialize, Deserialize)]
struct Index {
    tensors: BTreeMap<String, IndexEntry>,
}

fn io_err(path: &Path, e: impl ToString) -> CouplingError {
    CouplingError::CheckpointIo {
        path: path.display().to_string(),
        reason: e.to_string(),
    }
}

/// Writes `index.json` plus one little-endian float32 blob.
pub fn write_checkpoint_dir<T: Real>(dir: &Path, ckpt: &Checkpoint<T>) -> Result<(), CouplingError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut blob = Vec::new();
    let mut index = Index { tensors: BTreeMap::new() };
    for (name, t) in ckpt {
        index.tensors.insert(
            name.clone(),
            IndexEntry {
                shape: t.shape.clone(),
                dtype: "float32".into(),
                file: DATA_FILE.into(),
                offset: blob.len() as u64,
            },
        );
        for v in &t.data {
            blob.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes());
        }
    }
    let data_path = dir.join(DATA_FILE);
    fs::write(&data_path, blob).map_err(|e| io_err(&data_path, e))?;
    let index_path = dir.join(CHECKPOINT_INDEX);
    let json = serde_json::to_string_pretty(&index).map_err(|e| io_err(&index_path, e))?;
    fs::write(&index_path, json + "\n").map_err(|e| io_err(&index_path, e))
}

pub fn read_checkpoint_dir<T: Real>(dir: &Path) -> Result<Checkpoint<T>, CouplingError> {
    let index_path = dir.join(CHECKPOINT_INDEX);
    let text = fs::read_to_string(&index_path).map_err(|e| io_err(&index_path, e))?;
    let index: Index = serde_json::from_str(&text).map_err(|e| io_err(&index_path, e))?;
    let mut files: BTreeMap<String, Vec<u8>> = BTreeMap::new();
    let mut out = Checkpoint::new();
    for (name, entry) in index.tensors {
        if entry.dtype != "float32" {
            return Err(io_err(&index_path, format!("{name}: unsupported dtype {}", entry.dtype)));
        }
        if !files.contains_key(&entry.file) {
            let path = dir.join(&entry.file);
            files.insert(entry.file.clone(), fs::read(&path).map_err(|e| io_err(&path, e))?);
        }
        let bytes = &files[&entry.file];
        let numel: usize = entry.shape.iter().product();
        let start = entry.offset as usize;
        let end = start + 4 * numel;
        let raw = bytes
            .get(start..end)
            .ok_or_else(|| io_err(&dir.join(&entry.file), format!("{name}: bytes {start}..{end} out of range")))?;
        let data = raw
            .chunks_exact(4)
            .map(|c| T::lit(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
            .collect();
        out.insert(name, Tensor { shape: entry.shape, data });
    }
    Ok(out)
}
