//! Versioned binary checkpoints of named `f32` arrays.
//!
//! Layout: the 8-byte magic `GWINCKPT`, a little-endian `u32` format version,
//! a little-endian `u32` header length, a UTF-8 JSON header, then the
//! concatenated little-endian `f32` payload. The header lists every array's
//! name, shape and element offset, an architecture descriptor, free-form
//! metadata and the SHA-256 of the payload bytes.

use crate::classifier::{ArchitectureSpec, ClassifierModel, PriorSpec};
use crate::error::{GwinError, Result};
use crate::nn::{Adam, AdamConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::path::Path;

pub const MAGIC: &[u8; 8] = b"GWINCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    kind: String,
    architecture: Value,
    arrays: Vec<ArrayEntry>,
    content_hash: String,
    metadata: Value,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub architecture: Value,
    pub metadata: Value,
    arrays: Vec<(ArrayEntry, Vec<f32>)>,
}

impl Checkpoint {
    pub fn new(kind: impl Into<String>, architecture: Value, metadata: Value) -> Self {
        Self { kind: kind.into(), architecture, metadata, arrays: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, shape: &[usize], data: &[f32]) {
        let len: usize = shape.iter().product();
        assert_eq!(len, data.len(), "array shape does not match its data");
        let offset = self.arrays.last().map_or(0, |(e, _)| e.offset + e.len);
        self.arrays.push((ArrayEntry { name: name.into(), shape: shape.to_vec(), offset, len }, data.to_vec()));
    }

    pub fn entries(&self) -> impl Iterator<Item = &ArrayEntry> {
        self.arrays.iter().map(|(e, _)| e)
    }

    pub fn get(&self, name: &str) -> Result<&[f32]> {
        self.arrays
            .iter()
            .find(|(e, _)| e.name == name)
            .map(|(_, d)| d.as_slice())
            .ok_or_else(|| GwinError::Checkpoint(format!("missing array `{name}`")))
    }

    /// Copies array `name` into `dst`, which must already have the right length.
    pub fn read_into(&self, name: &str, dst: &mut [f32]) -> Result<()> {
        let src = self.get(name)?;
        if src.len() != dst.len() {
            return Err(GwinError::Checkpoint(format!(
                "array `{name}` has {} values, model expects {}",
                src.len(),
                dst.len()
            )));
        }
        dst.copy_from_slice(src);
        Ok(())
    }

    fn payload(&self) -> Vec<u8> {
        self.arrays.iter().flat_map(|(_, d)| d.iter().flat_map(|v| v.to_le_bytes())).collect()
    }

    /// SHA-256 of the payload bytes, hex encoded.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.payload()))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let payload = self.payload();
        let header = Header {
            kind: self.kind.clone(),
            architecture: self.architecture.clone(),
            arrays: self.entries().cloned().collect(),
            content_hash: hex::encode(Sha256::digest(&payload)),
            metadata: self.metadata.clone(),
        };
        let header = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(16 + header.len() + payload.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&payload);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| GwinError::Checkpoint(m.to_string());
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(GwinError::Checkpoint(format!("unsupported format version {version}")));
        }
        let header_len = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let header_end = 16 + header_len;
        if bytes.len() < header_end {
            return Err(bad("truncated header"));
        }
        let header: Header = serde_json::from_slice(&bytes[16..header_end])?;
        let payload = &bytes[header_end..];
        if hex::encode(Sha256::digest(payload)) != header.content_hash {
            return Err(bad("payload hash does not match the header"));
        }
        let mut arrays = Vec::with_capacity(header.arrays.len());
        for e in header.arrays {
            let range = e.offset * 4..(e.offset + e.len) * 4;
            let raw = payload.get(range).ok_or_else(|| bad("array extends past the payload"))?;
            let data = raw.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
            arrays.push((e, data));
        }
        Ok(Self { kind: header.kind, architecture: header.architecture, metadata: header.metadata, arrays })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("partial");
        std::fs::write(&tmp, self.to_bytes()?)?;
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(GwinError::Checkpoint(format!("expected a `{kind}` checkpoint, found `{}`", self.kind)))
        }
    }
}

/// Appends optimizer moments as `{prefix}.m.{i}` / `{prefix}.v.{i}` arrays.
pub fn push_adam(ckpt: &mut Checkpoint, prefix: &str, adam: &Adam) {
    for (i, (m, v)) in adam.first.iter().zip(&adam.second).enumerate() {
        ckpt.push(format!("{prefix}.m.{i}"), &[m.len()], m);
        ckpt.push(format!("{prefix}.v.{i}"), &[v.len()], v);
    }
}

pub fn adam_metadata(adam: &Adam) -> Value {
    serde_json::json!({ "config": adam.config, "steps": adam.steps, "groups": adam.first.len() })
}

pub fn read_adam(ckpt: &Checkpoint, prefix: &str, meta: &Value) -> Result<Adam> {
    let config: AdamConfig = serde_json::from_value(meta["config"].clone())?;
    let steps = meta["steps"].as_u64().ok_or_else(|| GwinError::Checkpoint("optimizer steps missing".into()))?;
    let groups = meta["groups"].as_u64().unwrap_or(0) as usize;
    let mut adam = Adam::new(config);
    adam.steps = steps;
    for i in 0..groups {
        adam.first.push(ckpt.get(&format!("{prefix}.m.{i}"))?.to_vec());
        adam.second.push(ckpt.get(&format!("{prefix}.v.{i}"))?.to_vec());
    }
    Ok(adam)
}

pub const CLASSIFIER_KIND: &str = "classifier";

impl ClassifierModel {
    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut meta = serde_json::json!({
            "epochs_trained": self.epochs_trained,
            "prior": self.prior,
            "parameter_hash": self.parameter_hash(),
        });
        let mut ckpt = Checkpoint::new(CLASSIFIER_KIND, serde_json::to_value(&self.spec)?, Value::Null);
        for (i, l) in self.flipout_layers().enumerate() {
            let fan_in = l.fan_in();
            ckpt.push(format!("layer{i}.mu"), &[fan_in, l.out_channels()], &l.mu);
            ckpt.push(format!("layer{i}.rho"), &[fan_in, l.out_channels()], &l.rho);
            ckpt.push(format!("layer{i}.bias"), &[l.bias.len()], &l.bias);
        }
        if let Some(adam) = &self.optimizer {
            push_adam(&mut ckpt, "adam", adam);
            meta["adam"] = adam_metadata(adam);
        }
        ckpt.metadata = meta;
        Ok(ckpt)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        ckpt.expect_kind(CLASSIFIER_KIND)?;
        let spec: ArchitectureSpec = serde_json::from_value(ckpt.architecture.clone())?;
        let mut model = ClassifierModel::new(spec, 0)?;
        for (i, l) in model.flipout_layers_mut().enumerate() {
            ckpt.read_into(&format!("layer{i}.mu"), &mut l.mu)?;
            ckpt.read_into(&format!("layer{i}.rho"), &mut l.rho)?;
            ckpt.read_into(&format!("layer{i}.bias"), &mut l.bias)?;
        }
        let meta = &ckpt.metadata;
        model.epochs_trained = meta["epochs_trained"].as_u64().unwrap_or(0) as usize;
        if let Some(prior) = meta.get("prior") {
            model.prior = serde_json::from_value::<PriorSpec>(prior.clone())?;
        }
        if let Some(adam) = meta.get("adam") {
            model.optimizer = Some(read_adam(ckpt, "adam", adam)?);
        }
        if let Some(h) = meta.get("parameter_hash").and_then(Value::as_str) {
            if h != model.parameter_hash() {
                return Err(GwinError::Checkpoint("parameter hash mismatch".into()));
            }
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint()?.save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}
