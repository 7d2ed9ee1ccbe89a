//! `SMM2` checkpoints: magic, `u16` version, a length-prefixed JSON header
//! (model config plus free-form metadata), named `f32` tensors, and a CRC32
//! over everything after the version.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::codec::{Reader, Writer};
use crate::error::{Error, FormatError, Result};

use super::{ModelConfig, Samm2dModel};

pub const SMM2_MAGIC: &[u8; 4] = b"SMM2";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    meta: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Samm2dModel<f32>,
    pub meta: BTreeMap<String, String>,
}

pub fn encode_checkpoint(model: &Samm2dModel<f32>, meta: &BTreeMap<String, String>) -> Vec<u8> {
    let mut w = Writer::new(SMM2_MAGIC, CHECKPOINT_VERSION);
    let body_start = w.len();
    let header = serde_json::to_vec(&Header {
        model: model.config().clone(),
        meta: meta.clone(),
    })
    .expect("config serialises");
    w.u32(header.len() as u32);
    w.bytes(&header);
    let params = model.named_params();
    w.u32(params.len() as u32);
    for p in params {
        w.u32(p.name.len() as u32);
        w.bytes(p.name.as_bytes());
        w.u32(p.tensor.shape().len() as u32);
        for &d in p.tensor.shape() {
            w.u32(d as u32);
        }
        w.u64(p.tensor.numel() as u64);
        w.f32s(p.tensor.data());
    }
    w.finish_with_crc(body_start)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let (mut r, version) = Reader::open(bytes, SMM2_MAGIC)?;
    if version != CHECKPOINT_VERSION {
        return Err(FormatError::UnsupportedVersion(version).into());
    }
    let body_start = r.pos();
    let header_len = r.u32()? as usize;
    let header: Header = serde_json::from_slice(r.take(header_len)?)
        .map_err(|e| FormatError::Malformed(format!("checkpoint header: {e}")))?;
    let count = r.u32()? as usize;
    let mut tensors = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| FormatError::Malformed("tensor name is not utf-8".into()))?
            .to_string();
        let ndim = r.u32()? as usize;
        let mut shape = Vec::with_capacity(ndim.min(8));
        for _ in 0..ndim {
            shape.push(r.u32()? as usize);
        }
        let numel = r.u64()? as usize;
        if shape.iter().product::<usize>() != numel {
            return Err(FormatError::Malformed(format!(
                "tensor {name}: {numel} values for shape {shape:?}"
            ))
            .into());
        }
        let data = r.f32s(numel)?;
        tensors.push((name, Tensor::new(&shape, data)?));
    }
    r.verify_crc(body_start)?;
    let model = Samm2dModel::from_named(header.model, tensors)?;
    Ok(Checkpoint {
        model,
        meta: header.meta,
    })
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    model: &Samm2dModel<f32>,
    meta: &BTreeMap<String, String>,
) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_checkpoint(model, meta)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
