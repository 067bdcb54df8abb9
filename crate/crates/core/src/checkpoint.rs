//! Single-file model checkpoints.
//!
//! ```text
//! "RGCK" | u32 version | u64 header_len | header (JSON) | payload | u32 crc32
//! ```
//!
//! The header carries the model and training configuration, the
//! vocabulary, and a manifest of tensor names and shapes. The payload is
//! every tensor, in manifest order, as little-endian `f64`. The CRC-32
//! covers every byte before it.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};
use crate::textdata::Vocabulary;
use crate::training::TrainConfig;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"RGCK";
const PREFIX_LEN: usize = 4 + 4 + 8;
const CRC_LEN: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    model: ModelConfig,
    train: Option<TrainConfig>,
    vocab: Vec<String>,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    /// settings the model was trained with, if any
    pub train_config: Option<TrainConfig>,
}

impl Checkpoint {
    pub fn new(model: Model, train_config: Option<TrainConfig>) -> Self {
        Checkpoint { model, train_config }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let tensors = self.model.params.tensors();
        let header = Header {
            format_version: FORMAT_VERSION,
            model: self.model.config.clone(),
            train: self.train_config.clone(),
            vocab: self.model.vocab.tokens().to_vec(),
            tensors: tensors
                .iter()
                .map(|t| TensorEntry {
                    name: t.name.clone(),
                    rows: t.rows,
                    cols: t.cols,
                })
                .collect(),
        };
        let header = serde_json::to_vec(&header)?;
        let payload_len: usize = tensors.iter().map(|t| t.data.len() * 8).sum();
        let mut out = Vec::with_capacity(PREFIX_LEN + header.len() + payload_len + CRC_LEN);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for t in &tensors {
            for v in t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() {
            return Err(Error::Truncated(format!("{} bytes", bytes.len())));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::BadMagic);
        }
        if bytes.len() < PREFIX_LEN {
            return Err(Error::Truncated("incomplete prefix".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let header_end = PREFIX_LEN
            .checked_add(header_len)
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| Error::Truncated(format!("header of {header_len} bytes")))?;
        let checksum = || -> Result<()> {
            if bytes.len() < CRC_LEN {
                return Ok(());
            }
            let split = bytes.len() - CRC_LEN;
            let stored = u32::from_le_bytes(bytes[split..].try_into().expect("4 bytes"));
            let computed = crc32fast::hash(&bytes[..split]);
            if stored != computed {
                return Err(Error::Checksum { stored, computed });
            }
            Ok(())
        };
        let header: Header = match serde_json::from_slice(&bytes[PREFIX_LEN..header_end]) {
            Ok(h) => h,
            Err(e) => {
                checksum()?;
                return Err(e.into());
            }
        };
        let payload_len: usize = header.tensors.iter().map(|t| t.rows * t.cols * 8).sum();
        let expected = header_end + payload_len + CRC_LEN;
        if bytes.len() < expected {
            return Err(Error::Truncated(format!(
                "expected {expected} bytes, found {}",
                bytes.len()
            )));
        }
        if bytes.len() > expected {
            return Err(Error::Truncated(format!(
                "{} trailing bytes after checksum",
                bytes.len() - expected
            )));
        }
        checksum()?;

        let vocab = Vocabulary::from_full_list(header.vocab)?;
        let mut model = Model::init(header.model, vocab, 0)?;
        {
            let mut targets = model.params.tensors_mut();
            let names = |t: &[crate::numerics::TensorMut<'_>]| t.iter().map(|t| t.name.clone()).collect::<Vec<_>>();
            let expected_names = names(&targets);
            let found: Vec<String> = header.tensors.iter().map(|t| t.name.clone()).collect();
            if expected_names != found {
                return Err(Error::Config(format!(
                    "tensor manifest {found:?} does not match model layout {expected_names:?}"
                )));
            }
            let mut offset = header_end;
            for (entry, target) in header.tensors.iter().zip(targets.iter_mut()) {
                if entry.rows * entry.cols != target.data.len() {
                    return Err(Error::shape(
                        "checkpoint",
                        format!("{} stored as {}x{}", entry.name, entry.rows, entry.cols),
                        format!("{} elements", target.data.len()),
                    ));
                }
                for v in target.data.iter_mut() {
                    *v = f64::from_le_bytes(bytes[offset..offset + 8].try_into().expect("8 bytes"));
                    offset += 8;
                }
            }
        }
        model.validate()?;
        Ok(Checkpoint {
            model,
            train_config: header.train,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        // written beside the target, then renamed into place
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, bytes)?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// Writes `model` (and its training settings) to `path`.
pub fn save_checkpoint(model: &Model, train_config: Option<&TrainConfig>, path: &Path) -> Result<()> {
    Checkpoint::new(model.clone(), train_config.cloned()).save(path)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path)
}
