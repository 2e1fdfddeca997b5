//! Checkpoint directory: `manifest.json` plus `weights.bin` (little-endian f32 blocks).

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::BLOCK_NAMES;
use super::{ModelError, ModelShape, SentimentCNN, Trainable};
use crate::corpus::{VocabHash, Vocabulary};
use crate::nnkernel::{Conv1DParams, DenseParams, Tensor};

pub const CHECKPOINT_FORMAT: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: u32,
    pub precision: String,
    pub shape: ModelShape,
    pub vocab_size: usize,
    pub vocab_hash: String,
    pub seed: u64,
    pub trainable: Trainable,
    /// Blocks in the order they appear in `weights.bin`.
    pub layers: Vec<LayerEntry>,
}

fn block_shapes(model: &SentimentCNN<f32>) -> [Vec<usize>; 9] {
    [
        model.embedding().shape().to_vec(),
        model.conv1().weights.shape().to_vec(),
        model.conv1().bias.shape().to_vec(),
        model.conv2().weights.shape().to_vec(),
        model.conv2().bias.shape().to_vec(),
        model.dense().weights.shape().to_vec(),
        model.dense().bias.shape().to_vec(),
        model.out().weights.shape().to_vec(),
        model.out().bias.shape().to_vec(),
    ]
}

pub fn save_checkpoint(model: &SentimentCNN<f32>, dir: &Path) -> Result<(), ModelError> {
    fs::create_dir_all(dir)?;
    let manifest = Manifest {
        format: CHECKPOINT_FORMAT,
        precision: "f32".into(),
        shape: *model.shape(),
        vocab_size: model.vocab_size(),
        vocab_hash: model.vocab_hash().0.clone(),
        seed: model.seed(),
        trainable: model.trainable(),
        layers: BLOCK_NAMES
            .iter()
            .zip(block_shapes(model))
            .map(|(n, shape)| LayerEntry { name: n.to_string(), shape })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(dir.join("manifest.json"), json + "\n")?;
    let mut out = BufWriter::new(fs::File::create(dir.join("weights.bin"))?);
    for block in model.blocks() {
        for v in block {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Load a checkpoint; with `vocab` given, refuse one trained on a different vocabulary.
pub fn load_checkpoint(dir: &Path, vocab: Option<&Vocabulary>) -> Result<SentimentCNN<f32>, ModelError> {
    let manifest_path = dir.join("manifest.json");
    let bad = |detail: String| ModelError::Checkpoint { path: manifest_path.clone(), detail };
    let text = fs::read_to_string(&manifest_path)?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    if manifest.format != CHECKPOINT_FORMAT || manifest.precision != "f32" {
        return Err(bad(format!("unsupported format {} / precision {}", manifest.format, manifest.precision)));
    }
    if let Some(v) = vocab {
        if v.hash().0 != manifest.vocab_hash {
            return Err(ModelError::VocabMismatch { expected: v.hash().0, found: manifest.vocab_hash });
        }
    }
    let names: Vec<&str> = manifest.layers.iter().map(|l| l.name.as_str()).collect();
    if names != BLOCK_NAMES {
        return Err(bad(format!("layer order {names:?}, expected {BLOCK_NAMES:?}")));
    }

    let weights_path = dir.join("weights.bin");
    let mut bytes = Vec::new();
    fs::File::open(&weights_path)?.read_to_end(&mut bytes)?;
    let expected: u64 = manifest.layers.iter().map(|l| l.shape.iter().product::<usize>() as u64 * 4).sum();
    let mut offset = 0usize;
    let mut tensors = Vec::with_capacity(9);
    for layer in &manifest.layers {
        let n: usize = layer.shape.iter().product();
        if bytes.len() < offset + n * 4 {
            return Err(ModelError::Truncated {
                path: weights_path,
                offset: bytes.len() as u64,
                layer: layer.name.clone(),
                expected,
            });
        }
        let data = bytes[offset..offset + n * 4]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        tensors.push(Tensor::new(layer.shape.clone(), data)?);
        offset += n * 4;
    }
    if offset != bytes.len() {
        return Err(ModelError::Checkpoint {
            path: weights_path,
            detail: format!("{} trailing bytes after offset {offset}", bytes.len() - offset),
        });
    }
    let mut it = tensors.into_iter();
    let mut next = || it.next().expect("nine blocks");
    let embedding = next();
    let conv1 = Conv1DParams::new(next(), next(), 1)?;
    let conv2 = Conv1DParams::new(next(), next(), 1)?;
    let dense = DenseParams::new(next(), next())?;
    let out = DenseParams::new(next(), next())?;
    let model = SentimentCNN::from_parts(
        manifest.shape,
        embedding,
        conv1,
        conv2,
        dense,
        out,
        manifest.trainable,
        VocabHash(manifest.vocab_hash),
        manifest.seed,
    )?;
    if model.vocab_size() != manifest.vocab_size {
        return Err(bad(format!("embedding has {} rows for vocab_size {}", model.vocab_size() + 1, manifest.vocab_size)));
    }
    Ok(model)
}
