//! `.grader.json` checkpoints.
//!
//! A checkpoint is one JSON document:
//!
//! ```text
//! {
//!   "format_version": 1,
//!   "config": { ...ModelConfig... },
//!   "vocabulary": { "format_version": 1, "tokens": [...] },
//!   "tensors": { "<name>": { "shape": [...], "data": [...] }, ... },
//!   "crc32": <u32>
//! }
//! ```
//!
//! `tensors` holds every trainable parameter and every batch-norm running
//! statistic, keyed by name. `crc32` is the CRC-32 (IEEE) of the compact
//! JSON serialization of the `tensors` object with keys in sorted order.
//! Numbers are written in shortest round-trip form and parsed exactly, so a
//! save/load cycle reproduces every parameter bit for bit.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GraderNet, ModelConfig};
use crate::rng::SeededRng;
use crate::tensor::Tensor;
use crate::tokenizer::Vocabulary;

pub const FORMAT_VERSION: u64 = 1;
pub const EXTENSION: &str = "grader.json";

#[derive(Serialize, Deserialize)]
struct VocabSection {
    format_version: u64,
    tokens: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format_version: u64,
    config: ModelConfig,
    vocabulary: VocabSection,
    tensors: BTreeMap<String, Tensor>,
    crc32: u32,
}

fn canonical_crc(tensors: &BTreeMap<String, Tensor>) -> u32 {
    let payload = serde_json::to_string(tensors).expect("tensors serialize");
    crc32fast::hash(payload.as_bytes())
}

fn tensor_map(net: &GraderNet) -> BTreeMap<String, Tensor> {
    net.named_tensors().into_iter().map(|(k, t)| (k, t.clone())).collect()
}

/// CRC-32 of the network's canonical tensor payload; a compact fingerprint
/// of every parameter and running statistic.
pub fn checksum(net: &GraderNet) -> u32 {
    canonical_crc(&tensor_map(net))
}

/// Serializes a checkpoint to a string.
pub fn to_json(net: &GraderNet, vocab: &Vocabulary) -> Result<String> {
    if vocab.len() != net.config.vocab_size {
        return Err(Error::Config(format!(
            "vocabulary has {} entries, model expects {}",
            vocab.len(),
            net.config.vocab_size
        )));
    }
    let tensors = tensor_map(net);
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        config: net.config.clone(),
        vocabulary: VocabSection {
            format_version: crate::tokenizer::VOCAB_FORMAT_VERSION,
            tokens: vocab.corpus_tokens().to_vec(),
        },
        crc32: canonical_crc(&tensors),
        tensors,
    };
    let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Malformed(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

pub fn from_json(text: &str) -> Result<(GraderNet, ModelConfig, Vocabulary)> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| match e.classify() {
        serde_json::error::Category::Eof => Error::Truncated(e.to_string()),
        _ => Error::Malformed(e.to_string()),
    })?;
    let version = value
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| Error::Malformed("missing format_version".into()))?;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    let manifest: Manifest = serde_json::from_value(value).map_err(|e| Error::Malformed(e.to_string()))?;
    let computed = canonical_crc(&manifest.tensors);
    if computed != manifest.crc32 {
        return Err(Error::Checksum {
            stored: manifest.crc32,
            computed,
        });
    }
    if manifest.vocabulary.format_version != crate::tokenizer::VOCAB_FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            found: manifest.vocabulary.format_version,
            supported: crate::tokenizer::VOCAB_FORMAT_VERSION,
        });
    }
    let vocab = Vocabulary::from_tokens(manifest.vocabulary.tokens)?;
    let config = manifest.config;
    if vocab.len() != config.vocab_size {
        return Err(Error::Malformed(format!(
            "vocabulary has {} entries, config says {}",
            vocab.len(),
            config.vocab_size
        )));
    }

    // Shapes come from the config; values come from the file.
    let mut net = GraderNet::build(config.clone(), &mut SeededRng::new(0))?;
    let mut tensors = manifest.tensors;
    for (name, slot) in net.named_tensors_mut() {
        let t = tensors
            .remove(&name)
            .ok_or_else(|| Error::Malformed(format!("missing tensor {name}")))?;
        if t.shape() != slot.shape() {
            return Err(Error::Malformed(format!(
                "tensor {name} has shape {:?}, expected {:?}",
                t.shape(),
                slot.shape()
            )));
        }
        *slot = t;
    }
    if let Some(extra) = tensors.keys().next() {
        return Err(Error::Malformed(format!("unexpected tensor {extra}")));
    }
    net.set_remark_head(config.remark_head);
    Ok((net, config, vocab))
}

pub fn save(net: &GraderNet, vocab: &Vocabulary, path: &Path) -> Result<()> {
    let text = to_json(net, vocab)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<(GraderNet, ModelConfig, Vocabulary)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_json(&text)
}
