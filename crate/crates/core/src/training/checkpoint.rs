//! Single-file model container.
//!
//! Layout: 8-byte magic, little-endian `u64` header length, UTF-8 JSON
//! header, raw little-endian `f32` tensor payload, little-endian CRC-32 of
//! the payload.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{ArrayD, IxDyn};
use serde::{Deserialize, Serialize};

use super::train::TrainHistory;
use crate::datastore::Normalizer;
use crate::error::{Error, Result};
use crate::model::{CtxGat, ModelConfig, ModelParams};
use crate::scoring::Thresholds;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"CTXGATv1";

/// Static categorical indices and real values of the monitored element.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StaticContext {
    pub static_cat: Vec<usize>,
    pub static_real: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub version: u32,
    pub model: CtxGat<f32>,
    pub kpis: Vec<String>,
    pub normalizer: Normalizer,
    pub static_context: StaticContext,
    pub thresholds: Option<Thresholds>,
    pub history: TrainHistory,
    pub seed: u64,
    pub config_hash: String,
    /// Serialized run configuration the checkpoint was produced with.
    pub run_config: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    dtype: String,
    shape: Vec<usize>,
    offset: usize,
    length: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    version: u32,
    model: ModelConfig,
    kpis: Vec<String>,
    normalizer: Normalizer,
    static_context: StaticContext,
    thresholds: Option<Thresholds>,
    history: TrainHistory,
    seed: u64,
    config_hash: String,
    run_config: String,
    tensors: Vec<TensorEntry>,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn new(model: CtxGat<f32>, kpis: Vec<String>, normalizer: Normalizer, history: TrainHistory, seed: u64) -> Self {
        Self {
            version: FORMAT_VERSION,
            model,
            kpis,
            normalizer,
            static_context: StaticContext::default(),
            thresholds: None,
            history,
            seed,
            config_hash: String::new(),
            run_config: String::new(),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut payload = Vec::with_capacity(self.model.param_count() * 4);
        let mut tensors = Vec::new();
        for (name, t) in self.model.params().iter() {
            let offset = payload.len();
            for &v in t.iter() {
                payload.extend_from_slice(&v.to_le_bytes());
            }
            tensors.push(TensorEntry {
                name: name.to_string(),
                dtype: "f32".into(),
                shape: t.shape().to_vec(),
                offset,
                length: payload.len() - offset,
            });
        }
        let header = Header {
            version: self.version,
            model: self.model.config().clone(),
            kpis: self.kpis.clone(),
            normalizer: self.normalizer.clone(),
            static_context: self.static_context.clone(),
            thresholds: self.thresholds.clone(),
            history: self.history.clone(),
            seed: self.seed,
            config_hash: self.config_hash.clone(),
            run_config: self.run_config.clone(),
            tensors,
        };
        let json = serde_json::to_vec(&header).map_err(|e| corrupt(e.to_string()))?;
        let mut out = Vec::with_capacity(16 + json.len() + payload.len() + 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&payload);
        out.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(corrupt("not a checkpoint file (bad magic)"));
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let payload_start = 16usize
            .checked_add(header_len)
            .filter(|&p| p + 4 <= bytes.len())
            .ok_or_else(|| corrupt("file is truncated"))?;
        let payload = &bytes[payload_start..bytes.len() - 4];
        let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
        let actual = crc32fast::hash(payload);
        if stored != actual {
            return Err(corrupt(format!(
                "payload CRC-32 mismatch (stored {stored:08x}, computed {actual:08x})"
            )));
        }
        let header: Header = serde_json::from_slice(&bytes[16..payload_start])
            .map_err(|e| corrupt(format!("header: {e}")))?;
        if header.version != FORMAT_VERSION {
            return Err(corrupt(format!(
                "format version {} is not supported (expected {FORMAT_VERSION})",
                header.version
            )));
        }
        let mut params = ModelParams::new();
        for entry in &header.tensors {
            if entry.dtype != "f32" {
                return Err(corrupt(format!("tensor `{}` has dtype {}", entry.name, entry.dtype)));
            }
            let n: usize = entry.shape.iter().product();
            let end = entry.offset.checked_add(entry.length).filter(|&e| e <= payload.len());
            if entry.length != 4 * n || end.is_none() {
                return Err(corrupt(format!("tensor `{}` lies outside the payload", entry.name)));
            }
            let data: Vec<f32> = payload[entry.offset..entry.offset + entry.length]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect();
            let tensor = ArrayD::from_shape_vec(IxDyn(&entry.shape), data).expect("length checked");
            params.insert(entry.name.clone(), tensor);
        }
        let model = CtxGat::from_params(header.model, params).map_err(|e| corrupt(e.to_string()))?;
        if header.normalizer.n_kpis() != header.kpis.len() || model.config().n_kpis != header.kpis.len() {
            return Err(corrupt("KPI count disagrees between header fields"));
        }
        Ok(Self {
            version: header.version,
            model,
            kpis: header.kpis,
            normalizer: header.normalizer,
            static_context: header.static_context,
            thresholds: header.thresholds,
            history: header.history,
            seed: header.seed,
            config_hash: header.config_hash,
            run_config: header.run_config,
        })
    }

    /// CRC-32 of the tensor payload.
    pub fn payload_checksum(&self) -> u32 {
        let mut h = crc32fast::Hasher::new();
        for (_, t) in self.model.params().iter() {
            for &v in t.iter() {
                h.update(&v.to_le_bytes());
            }
        }
        h.finalize()
    }
}

/// Writes via a sibling temporary file so a failed write never leaves a
/// partial checkpoint at `path`.
pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let bytes = ckpt.to_bytes()?;
    let tmp = path.with_extension("tmp");
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}
