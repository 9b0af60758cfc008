//! Binary checkpoint format.
//!
//! Layout: 4-byte magic `LXSW`, format version (u32 LE), metadata length
//! (u64 LE), JSON metadata, then each tensor's raw little-endian f32 data
//! in the order the metadata declares. The metadata names every tensor
//! with its shape, carries the kind (lexical / body / full), the model
//! config and vocabulary where applicable, and free-form provenance.
//! Round-trips are bit-exact.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LexicalLayer, ModelConfig, TaggerModel, TransformerBody};
use crate::numcore::{ParamStore, Tensor};
use crate::tokenizer::Vocabulary;
use crate::{Error, Result};

pub const MAGIC: [u8; 4] = *b"LXSW";
pub const FORMAT_VERSION: u32 = 1;

/// Free-form provenance recorded alongside the tensors. Deterministic
/// ordering, so identical runs write identical files.
pub type Provenance = BTreeMap<String, String>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckpointKind {
    Lexical,
    Body,
    Full,
}

impl std::fmt::Display for CheckpointKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CheckpointKind::Lexical => write!(f, "lexical"),
            CheckpointKind::Body => write!(f, "body"),
            CheckpointKind::Full => write!(f, "full"),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct TensorMeta {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Metadata {
    kind: CheckpointKind,
    config: Option<ModelConfig>,
    vocab: Option<Vec<String>>,
    provenance: Provenance,
    tensors: Vec<TensorMeta>,
}

fn write_checkpoint(
    path: &Path,
    kind: CheckpointKind,
    config: Option<ModelConfig>,
    vocab: Option<&Vocabulary>,
    params: &ParamStore,
    provenance: Provenance,
) -> Result<()> {
    let tensors: Vec<TensorMeta> = params
        .iter()
        .map(|(name, e)| TensorMeta { name: name.to_string(), shape: e.tensor.shape().to_vec() })
        .collect();
    let meta = Metadata {
        kind,
        config,
        vocab: vocab.map(|v| v.tokens().to_vec()),
        provenance,
        tensors,
    };
    let meta_bytes = serde_json::to_vec(&meta)
        .map_err(|e| Error::Checkpoint(format!("metadata encoding failed: {e}")))?;

    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    out.write_all(&MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&(meta_bytes.len() as u64).to_le_bytes())?;
    out.write_all(&meta_bytes)?;
    for (_, entry) in params.iter() {
        for &v in entry.tensor.data() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

fn read_checkpoint(path: &Path, expected: CheckpointKind) -> Result<(Metadata, ParamStore)> {
    let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    file.read_exact(&mut magic)
        .map_err(|_| Error::Checkpoint("file too short for magic".into()))?;
    if magic != MAGIC {
        return Err(Error::Checkpoint(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&magic),
            String::from_utf8_lossy(&MAGIC)
        )));
    }
    let mut version = [0u8; 4];
    file.read_exact(&mut version)
        .map_err(|_| Error::Checkpoint("file too short for version".into()))?;
    let version = u32::from_le_bytes(version);
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "format version {version}, expected {FORMAT_VERSION}"
        )));
    }
    let mut len = [0u8; 8];
    file.read_exact(&mut len)
        .map_err(|_| Error::Checkpoint("file too short for metadata length".into()))?;
    let mut meta_bytes = vec![0u8; u64::from_le_bytes(len) as usize];
    file.read_exact(&mut meta_bytes)
        .map_err(|_| Error::Checkpoint("truncated metadata".into()))?;
    let meta: Metadata = serde_json::from_slice(&meta_bytes)
        .map_err(|e| Error::Checkpoint(format!("metadata decoding failed: {e}")))?;
    if meta.kind != expected {
        return Err(Error::Checkpoint(format!(
            "kind mismatch: expected {expected}, found {}",
            meta.kind
        )));
    }

    let mut params = ParamStore::new();
    for t in &meta.tensors {
        let numel: usize = t.shape.iter().product();
        let mut buf = vec![0u8; numel * 4];
        file.read_exact(&mut buf).map_err(|_| {
            Error::Checkpoint(format!("truncated tensor data for `{}`", t.name))
        })?;
        let data: Vec<f32> = buf
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        let tensor = Tensor::from_vec(&t.shape, data)
            .map_err(|_| Error::Checkpoint(format!("shape mismatch for `{}`", t.name)))?;
        params.insert(&t.name, tensor, true)?;
    }
    let mut trailing = [0u8; 1];
    if file.read(&mut trailing)? != 0 {
        return Err(Error::Checkpoint("trailing data after tensors".into()));
    }
    Ok((meta, params))
}

fn vocab_from_meta(meta: &Metadata, path: &Path) -> Result<Vocabulary> {
    let tokens = meta.vocab.clone().ok_or_else(|| {
        Error::Checkpoint(format!("{} carries no vocabulary", path.display()))
    })?;
    Vocabulary::from_tokens(tokens)
}

pub fn save_lexical(
    path: impl AsRef<Path>,
    lexical: &LexicalLayer,
    provenance: Provenance,
) -> Result<()> {
    write_checkpoint(
        path.as_ref(),
        CheckpointKind::Lexical,
        None,
        Some(&lexical.vocab),
        &lexical.params,
        provenance,
    )
}

pub fn load_lexical(path: impl AsRef<Path>) -> Result<(LexicalLayer, Provenance)> {
    let path = path.as_ref();
    let (meta, params) = read_checkpoint(path, CheckpointKind::Lexical)?;
    let vocab = vocab_from_meta(&meta, path)?;
    Ok((LexicalLayer { vocab, params }, meta.provenance))
}

pub fn save_body(
    path: impl AsRef<Path>,
    body: &TransformerBody,
    provenance: Provenance,
) -> Result<()> {
    write_checkpoint(
        path.as_ref(),
        CheckpointKind::Body,
        Some(body.config),
        None,
        &body.params,
        provenance,
    )
}

pub fn load_body(path: impl AsRef<Path>) -> Result<(TransformerBody, Provenance)> {
    let path = path.as_ref();
    let (meta, params) = read_checkpoint(path, CheckpointKind::Body)?;
    let config = meta
        .config
        .ok_or_else(|| Error::Checkpoint(format!("{} carries no config", path.display())))?;
    Ok((TransformerBody { config, params }, meta.provenance))
}

pub fn save_model(
    path: impl AsRef<Path>,
    model: &TaggerModel,
    provenance: Provenance,
) -> Result<()> {
    write_checkpoint(
        path.as_ref(),
        CheckpointKind::Full,
        Some(model.config),
        Some(&model.vocab),
        &model.params,
        provenance,
    )
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(TaggerModel, Provenance)> {
    let path = path.as_ref();
    let (meta, params) = read_checkpoint(path, CheckpointKind::Full)?;
    let config = meta
        .config
        .ok_or_else(|| Error::Checkpoint(format!("{} carries no config", path.display())))?;
    let vocab = vocab_from_meta(&meta, path)?;
    Ok((TaggerModel { config, vocab, params }, meta.provenance))
}
