//! Checkpoint layout: `LNSC` magic, u32 LE format version, u64 LE header
//! length, UTF-8 JSON header, then every tensor as little-endian f32 in
//! header order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{History, TrainConfig};
use crate::embed::{EmbeddingMatrix, EmbeddingSource};
use crate::models::{ArchitectureConfig, ClassifierModel, EmbeddingScenario};
use crate::nn::{Module, Tensor};
use crate::tokenize::Tokenizer;
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"LNSC";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset from the start of the payload section.
    pub offset: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub seed: u64,
    pub epoch: Option<usize>,
    pub train_config: Option<TrainConfig>,
    pub history: Option<History>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub config: ArchitectureConfig,
    pub tokenizer: Tokenizer,
    pub tokenizer_fingerprint: String,
    pub tensors: Vec<TensorEntry>,
    pub metadata: TrainingMetadata,
}

pub fn checkpoint_to_bytes(model: &ClassifierModel, metadata: &TrainingMetadata) -> Vec<u8> {
    let params = model.params();
    let mut tensors = Vec::with_capacity(params.len());
    let mut offset = 0u64;
    for p in &params {
        tensors.push(TensorEntry {
            name: p.name.clone(),
            shape: p.value.shape().to_vec(),
            offset,
        });
        offset += 4 * p.value.len() as u64;
    }
    let header = CheckpointHeader {
        config: model.config.clone(),
        tokenizer: model.tokenizer.clone(),
        tokenizer_fingerprint: model.tokenizer.fingerprint(),
        tensors,
        metadata: metadata.clone(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(16 + json.len() + offset as usize);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for p in &params {
        for v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn save_checkpoint(path: &Path, model: &ClassifierModel, metadata: &TrainingMetadata) -> Result<()> {
    fs::write(path, checkpoint_to_bytes(model, metadata)).map_err(|e| Error::io(path, e))
}

fn parse(bytes: &[u8]) -> Result<(CheckpointHeader, &[u8])> {
    if bytes.len() < 16 {
        return Err(Error::Checkpoint(format!("file too short ({} bytes)", bytes.len())));
    }
    if &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint(format!(
            "bad magic {:?}, expected \"LNSC\"",
            &bytes[..4]
        )));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {version} (this build reads {CHECKPOINT_VERSION})"
        )));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = &bytes[16..];
    if body.len() < header_len {
        return Err(Error::Checkpoint("truncated header".into()));
    }
    let header: CheckpointHeader =
        serde_json::from_slice(&body[..header_len]).map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
    if header.tokenizer.fingerprint() != header.tokenizer_fingerprint {
        return Err(Error::Checkpoint(
            "tokenizer fingerprint does not match stored tokenizer".into(),
        ));
    }
    let payload = &body[header_len..];
    let needed: u64 = header
        .tensors
        .iter()
        .map(|t| t.offset + 4 * t.shape.iter().product::<usize>() as u64)
        .max()
        .unwrap_or(0);
    if (payload.len() as u64) < needed {
        return Err(Error::Checkpoint(format!(
            "truncated payload: {} bytes, header needs {needed}",
            payload.len()
        )));
    }
    Ok((header, payload))
}

fn read_tensor(payload: &[u8], entry: &TensorEntry) -> Tensor<f32> {
    let n: usize = entry.shape.iter().product();
    let start = entry.offset as usize;
    let data = payload[start..start + 4 * n]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Tensor::new(&entry.shape, data).expect("length checked")
}

fn copy_tensors(model: &mut ClassifierModel, header: &CheckpointHeader, payload: &[u8]) -> Result<()> {
    let mut params = model.params_mut();
    if params.len() != header.tensors.len() {
        return Err(Error::Checkpoint(format!(
            "shape mismatch: model has {} tensors, checkpoint {}",
            params.len(),
            header.tensors.len()
        )));
    }
    for (p, entry) in params.iter().zip(&header.tensors) {
        if p.name != entry.name || p.value.shape() != entry.shape.as_slice() {
            return Err(Error::Checkpoint(format!(
                "shape mismatch: model tensor {} {:?} vs checkpoint {} {:?}",
                p.name,
                p.value.shape(),
                entry.name,
                entry.shape
            )));
        }
    }
    for (p, entry) in params.iter_mut().zip(&header.tensors) {
        p.value = read_tensor(payload, entry);
        p.zero_grad();
    }
    Ok(())
}

/// Rebuild the model a checkpoint describes.
pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<(ClassifierModel, CheckpointHeader)> {
    let (header, payload) = parse(bytes)?;
    let c = &header.config;
    // Pre-trained rows are about to be overwritten; any matrix of the
    // right shape satisfies the builder.
    let placeholder = (c.variant.word_level() && c.scenario != EmbeddingScenario::Random).then(|| EmbeddingMatrix {
        matrix: Tensor::zeros(&[c.vocab_size, c.embed_dim]),
        source: EmbeddingSource::Loaded,
        coverage: 0.0,
    });
    let mut model = ClassifierModel::build(c, header.tokenizer.clone(), placeholder.as_ref(), 0)
        .map_err(|e| Error::Checkpoint(format!("stored config is invalid: {e}")))?;
    copy_tensors(&mut model, &header, payload)?;
    Ok((model, header))
}

pub fn load_checkpoint(path: &Path) -> Result<(ClassifierModel, CheckpointHeader)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_bytes(&bytes)
}

/// Copy checkpoint tensors into an existing model whose configuration must
/// produce exactly the stored names and shapes.
pub fn restore_into(model: &mut ClassifierModel, bytes: &[u8]) -> Result<CheckpointHeader> {
    let (header, payload) = parse(bytes)?;
    copy_tensors(model, &header, payload)?;
    Ok(header)
}
