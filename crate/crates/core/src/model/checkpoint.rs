//! NTC1 checkpoint container.
//!
//! Layout (all integers little-endian): magic `NTC1`, u32 entry count, then
//! per entry a u16 name length + UTF-8 name, u8 rank, rank×u64 dims and the
//! raw 32-bit float payload; a trailing u32 CRC-32 (IEEE) covers every
//! preceding byte. Metadata (format version, config snapshot) travels in
//! reserved entries under the `meta.` prefix.

use std::path::Path;

use super::config::{Heads, ModelConfig};
use super::convnext::Model;
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

const MAGIC: &[u8; 4] = b"NTC1";
const FORMAT_VERSION: f32 = 1.0;
pub const META_PREFIX: &str = "meta.";

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointEntry {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

/// Ordered named-tensor store, bit-exact through its container format.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub entries: Vec<CheckpointEntry>,
}

impl Checkpoint {
    pub fn get(&self, name: &str) -> Option<&CheckpointEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn push(&mut self, name: impl Into<String>, dims: Vec<usize>, data: Vec<f32>) -> Result<()> {
        let name = name.into();
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(Error::Format(format!(
                "entry `{name}`: dims {dims:?} do not match {} values",
                data.len()
            )));
        }
        if self.get(&name).is_some() {
            return Err(Error::Format(format!("duplicate entry `{name}`")));
        }
        self.entries.push(CheckpointEntry { name, dims, data });
        Ok(())
    }

    /// Entries that carry parameters (everything outside the meta namespace).
    pub fn param_entries(&self) -> impl Iterator<Item = &CheckpointEntry> {
        self.entries.iter().filter(|e| !e.name.starts_with(META_PREFIX))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for e in &self.entries {
            buf.extend_from_slice(&(e.name.len() as u16).to_le_bytes());
            buf.extend_from_slice(e.name.as_bytes());
            buf.push(e.dims.len() as u8);
            for &d in &e.dims {
                buf.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in &e.data {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&buf);
        buf.extend_from_slice(&crc.to_le_bytes());
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 || &bytes[..4] != MAGIC {
            return Err(Error::Format("not an NTC1 checkpoint".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored_crc = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        if crc32fast::hash(body) != stored_crc {
            return Err(Error::Format("checkpoint CRC mismatch".into()));
        }
        let mut cur = 4usize;
        let take = |cur: &mut usize, n: usize| -> Result<&[u8]> {
            if *cur + n > body.len() {
                return Err(Error::Format("truncated checkpoint".into()));
            }
            let s = &body[*cur..*cur + n];
            *cur += n;
            Ok(s)
        };
        let count = u32::from_le_bytes(take(&mut cur, 4)?.try_into().unwrap()) as usize;
        let mut ckpt = Checkpoint::default();
        for _ in 0..count {
            let name_len = u16::from_le_bytes(take(&mut cur, 2)?.try_into().unwrap()) as usize;
            let name = std::str::from_utf8(take(&mut cur, name_len)?)
                .map_err(|_| Error::Format("entry name is not UTF-8".into()))?
                .to_string();
            let rank = take(&mut cur, 1)?[0] as usize;
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(u64::from_le_bytes(take(&mut cur, 8)?.try_into().unwrap()) as usize);
            }
            let n: usize = dims.iter().product();
            let raw = take(&mut cur, 4 * n)?;
            let data: Vec<f32> = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            ckpt.push(name, dims, data)?;
        }
        if cur != body.len() {
            return Err(Error::Format("trailing bytes after checkpoint entries".into()));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(std::fs::write(path, self.to_bytes())?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Decode the embedded config snapshot, if present.
    pub fn embedded_config(&self) -> Option<Result<ModelConfig>> {
        self.get("meta.config").map(|e| decode_config(&e.data))
    }
}

fn encode_config(cfg: &ModelConfig) -> Vec<f32> {
    let mut v = vec![cfg.in_channels as f32, cfg.num_stages() as f32];
    v.extend(cfg.stage_depths.iter().map(|&d| d as f32));
    v.extend(cfg.stage_channels.iter().map(|&c| c as f32));
    v.extend([
        cfg.depthwise_kernel as f32,
        cfg.stem_patch as f32,
        cfg.num_classes as f32,
        cfg.seg_channels as f32,
        (cfg.heads.classification as u8 + 2 * cfg.heads.segmentation as u8) as f32,
    ]);
    v
}

fn decode_config(data: &[f32]) -> Result<ModelConfig> {
    let bad = || Error::Format("malformed config snapshot".into());
    if data.len() < 2 {
        return Err(bad());
    }
    let n_stages = data[1] as usize;
    if data.len() != 2 + 2 * n_stages + 5 {
        return Err(bad());
    }
    let depths = data[2..2 + n_stages].iter().map(|&d| d as usize).collect();
    let channels = data[2 + n_stages..2 + 2 * n_stages].iter().map(|&c| c as usize).collect();
    let rest = &data[2 + 2 * n_stages..];
    let heads_bits = rest[4] as u8;
    Ok(ModelConfig {
        in_channels: data[0] as usize,
        stage_depths: depths,
        stage_channels: channels,
        depthwise_kernel: rest[0] as usize,
        stem_patch: rest[1] as usize,
        num_classes: rest[2] as usize,
        seg_channels: rest[3] as usize,
        heads: Heads {
            classification: heads_bits & 1 != 0,
            segmentation: heads_bits & 2 != 0,
        },
    })
}

impl<E: Element> Model<E> {
    /// Snapshot all parameters (canonical order) plus metadata entries.
    pub fn save_checkpoint(&self) -> Checkpoint {
        let mut ckpt = Checkpoint::default();
        ckpt.push("meta.version", vec![1], vec![FORMAT_VERSION])
            .expect("reserved names unused");
        let cfg = encode_config(self.config());
        ckpt.push("meta.config", vec![cfg.len()], cfg).expect("reserved names unused");
        for (name, t) in self.params().iter() {
            let data: Vec<f32> = t.data().iter().map(|&v| v.to_f64() as f32).collect();
            ckpt.push(name, t.dims().to_vec(), data).expect("parameter names unique");
        }
        ckpt
    }

    /// Load parameters, validating every name and shape. Missing, extra or
    /// mis-shaped entries are reported by name.
    pub fn load_checkpoint(&mut self, ckpt: &Checkpoint) -> Result<()> {
        if let Some(cfg) = ckpt.embedded_config() {
            let cfg = cfg?;
            if &cfg != self.config() {
                return Err(Error::Checkpoint(format!(
                    "checkpoint architecture {:?} does not match model {:?}",
                    cfg,
                    self.config()
                )));
            }
        }
        let expected: Vec<String> = self.params().iter().map(|(n, _)| n.to_string()).collect();
        for name in &expected {
            let entry = ckpt
                .get(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing entry `{name}`")))?;
            let dims = self.params().get(name)?.dims().to_vec();
            if entry.dims != dims {
                return Err(Error::Checkpoint(format!(
                    "entry `{name}` has dims {:?}, model expects {:?}",
                    entry.dims, dims
                )));
            }
            let data: Vec<E> = entry.data.iter().map(|&v| E::from_f64(v as f64)).collect();
            self.set_param(name, Tensor::from_vec(entry.dims.clone(), data)?)?;
        }
        for entry in ckpt.param_entries() {
            if !expected.iter().any(|n| n == &entry.name) {
                return Err(Error::Checkpoint(format!("unexpected entry `{}`", entry.name)));
            }
        }
        Ok(())
    }

    /// Rebuild a model from a checkpoint that carries a config snapshot.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Model<E>> {
        let cfg = ckpt
            .embedded_config()
            .ok_or_else(|| Error::Checkpoint("checkpoint has no config snapshot".into()))??;
        let mut model = Model::build(cfg, 0)?;
        model.load_checkpoint(ckpt)?;
        Ok(model)
    }
}
