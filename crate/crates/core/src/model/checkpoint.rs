//! Binary checkpoint files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      4 bytes  "LMCK"
//! version    u32      currently 1
//! dtype      u8       4 = f32, 8 = f64
//! config     u32 length + UTF-8 key-value text ([model], [layer.N], [scaler], [meta])
//! tensors    u32 count, then per tensor:
//!              u16 name length + name, u64 element count, elements
//! crc32      u32      over every preceding byte
//! ```
//!
//! Tensors are the model state (kernels, biases, γ, β, running statistics)
//! followed by any extra named tensors such as optimizer moments.

use std::fs;
use std::path::Path;

use super::{build_model, Model, ModelConfig};
use crate::dataio::Standardizer;
use crate::error::{shape_err, Error, Result};
use crate::kv::KvDoc;
use crate::real::{DType, Real};

pub const MAGIC: &[u8; 4] = b"LMCK";
pub const FORMAT_VERSION: u32 = 1;

/// Training provenance stored with a checkpoint.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainMeta {
    pub epoch: usize,
    pub seed: u64,
    pub load: String,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// Optimizer step counter, when optimizer state is included.
    pub optim_step: Option<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T> {
    pub model: Model<T>,
    pub meta: TrainMeta,
    /// Additional named tensors, e.g. optimizer moments.
    pub extra: Vec<(String, Vec<T>)>,
}

impl<T: Real> Checkpoint<T> {
    pub fn new(model: Model<T>) -> Self {
        Checkpoint {
            model,
            meta: TrainMeta::default(),
            extra: Vec::new(),
        }
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(", ")
}

fn split(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse().map_err(|_| Error::Integrity(format!("bad number `{p}` in metadata"))))
        .collect()
}

pub fn encode_checkpoint<T: Real>(ck: &Checkpoint<T>) -> Vec<u8> {
    let mut doc = ck.model.config().to_kv();
    doc.section_mut("scaler")
        .set("mean", ck.model.scaler.mean)
        .set("std", ck.model.scaler.std);
    let m = &ck.meta;
    let meta = doc.section_mut("meta");
    meta.set("epoch", m.epoch)
        .set("seed", m.seed)
        .set("load", &m.load)
        .set("train_loss", join(&m.train_loss))
        .set("val_loss", join(&m.val_loss));
    if let Some(step) = m.optim_step {
        meta.set("optim_step", step);
    }
    let text = doc.to_string();

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(T::DTYPE.tag());
    out.extend_from_slice(&(text.len() as u32).to_le_bytes());
    out.extend_from_slice(text.as_bytes());
    let state = ck.model.state_tensors();
    let all: Vec<(&str, &[T])> = state
        .iter()
        .map(|(n, v)| (n.as_str(), *v))
        .chain(ck.extra.iter().map(|(n, v)| (n.as_str(), v.as_slice())))
        .collect();
    out.extend_from_slice(&(all.len() as u32).to_le_bytes());
    for (name, values) in all {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(values.len() as u64).to_le_bytes());
        for &v in values {
            v.write_le(&mut out);
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Integrity("checkpoint is truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Decodes a checkpoint. Values stored in the other precision are converted.
pub fn decode_checkpoint<T: Real>(bytes: &[u8]) -> Result<Checkpoint<T>> {
    if bytes.len() < MAGIC.len() || &bytes[..4] != MAGIC {
        return Err(Error::Integrity("not a checkpoint file (bad magic)".into()));
    }
    if bytes.len() < 13 {
        return Err(Error::Integrity("checkpoint is truncated".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    let mut c = Cursor { bytes: body, pos: 4 };
    let version = c.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Integrity(format!(
            "unsupported checkpoint version {version} (this build reads {FORMAT_VERSION})"
        )));
    }
    if crc32fast::hash(body) != stored {
        return Err(Error::Integrity("checksum mismatch: file is corrupt or truncated".into()));
    }
    let tag = c.take(1)?[0];
    let dtype = DType::from_tag(tag).ok_or_else(|| Error::Integrity(format!("unknown dtype tag {tag}")))?;
    let text_len = c.u32()? as usize;
    let text = std::str::from_utf8(c.take(text_len)?)
        .map_err(|_| Error::Integrity("embedded config is not UTF-8".into()))?;
    let doc = KvDoc::parse(text).map_err(|e| Error::Integrity(format!("embedded config: {e}")))?;
    let config = ModelConfig::from_kv(&doc).map_err(|e| Error::Integrity(format!("embedded config: {e}")))?;
    let mut model: Model<T> = build_model(&config, 0)?;
    let sc = doc.section_or_empty("scaler");
    model.scaler = Standardizer::new(sc.require("mean")?, sc.require("std")?)?;
    let m = doc.section_or_empty("meta");
    let meta = TrainMeta {
        epoch: m.get_or("epoch", 0)?,
        seed: m.get_or("seed", 0)?,
        load: m.get("load").unwrap_or("").to_string(),
        train_loss: split(m.get("train_loss").unwrap_or(""))?,
        val_loss: split(m.get("val_loss").unwrap_or(""))?,
        optim_step: m.get("optim_step").map(str::parse).transpose().map_err(|_| Error::Integrity("bad optim_step".into()))?,
    };

    let width = dtype.tag() as usize;
    let count = c.u32()? as usize;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = c.u16()? as usize;
        let name = String::from_utf8(c.take(name_len)?.to_vec())
            .map_err(|_| Error::Integrity("tensor name is not UTF-8".into()))?;
        let n = c.u64()? as usize;
        let raw = c.take(n.checked_mul(width).ok_or_else(|| Error::Integrity("tensor too large".into()))?)?;
        let values: Vec<T> = match dtype {
            d if d == T::DTYPE => raw.chunks_exact(width).map(T::read_le).collect(),
            DType::F32 => raw.chunks_exact(4).map(|b| T::lit(f32::read_le(b) as f64)).collect(),
            DType::F64 => raw.chunks_exact(8).map(|b| T::lit(f64::read_le(b))).collect(),
        };
        tensors.push((name, values));
    }
    if c.pos != body.len() {
        return Err(Error::Integrity("trailing bytes after tensor records".into()));
    }

    let mut tensors = tensors.into_iter();
    for (name, slot) in model.state_tensors_mut() {
        let (got, values) = tensors
            .next()
            .ok_or_else(|| Error::Integrity(format!("missing tensor {name}")))?;
        if got != name {
            return Err(Error::Integrity(format!("expected tensor {name}, found {got}")));
        }
        if values.len() != slot.len() {
            return Err(shape_err!(
                "tensor {name} has {} values, config implies {}",
                values.len(),
                slot.len()
            ));
        }
        *slot = values;
    }
    Ok(Checkpoint {
        model,
        meta,
        extra: tensors.collect(),
    })
}

pub fn save_checkpoint<T: Real>(path: &Path, ck: &Checkpoint<T>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, encode_checkpoint(ck)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Real>(path: &Path) -> Result<Checkpoint<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

/// Loads a checkpoint that must have been written for `expected`.
pub fn load_checkpoint_expecting<T: Real>(path: &Path, expected: &ModelConfig) -> Result<Checkpoint<T>> {
    let ck = load_checkpoint::<T>(path)?;
    if ck.model.config() != expected {
        let (a, b) = (ck.model.config().parameter_count()?, expected.parameter_count()?);
        return Err(shape_err!(
            "checkpoint was written for a different architecture ({} layers, {a} parameters; expected {} layers, {b})",
            ck.model.config().layer_count(),
            expected.layer_count()
        ));
    }
    Ok(ck)
}
