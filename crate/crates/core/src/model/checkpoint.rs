//! Versioned binary checkpoints.
//!
//! ```text
//! "LPRC"  u32 version
//! u32 d  u32 adapter_hidden  u32 mlp_hidden  f64 residual_ratio  f64 tau_init
//! u32 |S|  u32 |O|  u8 branch mask bits
//! u32 len + utf-8 dataset hash
//! u32 #params, per param: u32 len + utf-8 name, u32 rank, u32 dims..., f64 values
//! 32-byte SHA-256 of everything above
//! ```

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::params::{BranchMask, LprModel, ModelConfig};
use crate::dataset::CompositionSpace;
use crate::diffmath::Tensor;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"LPRC";
pub const CHECKPOINT_VERSION: u32 = 1;

/// What a checkpoint was trained against.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckpointMeta {
    pub num_states: usize,
    pub num_objects: usize,
    pub dataset_hash: String,
}

impl CheckpointMeta {
    /// Errors unless the model can score `space`.
    pub fn verify_space(&self, space: &CompositionSpace) -> Result<()> {
        if space.num_states() != self.num_states || space.num_objects() != self.num_objects {
            return Err(Error::ShapeMismatch(format!(
                "checkpoint expects {}x{} primitives, dataset has {}x{}",
                self.num_states,
                self.num_objects,
                space.num_states(),
                space.num_objects()
            )));
        }
        Ok(())
    }
}

pub fn encode_checkpoint(model: &LprModel, meta: &CheckpointMeta) -> Vec<u8> {
    let mut b = Vec::new();
    let u32 = |b: &mut Vec<u8>, v: usize| b.extend_from_slice(&(v as u32).to_le_bytes());
    let s = |b: &mut Vec<u8>, v: &str| {
        b.extend_from_slice(&(v.len() as u32).to_le_bytes());
        b.extend_from_slice(v.as_bytes());
    };
    let c = &model.config;
    b.extend_from_slice(CHECKPOINT_MAGIC);
    u32(&mut b, CHECKPOINT_VERSION as usize);
    u32(&mut b, c.dim);
    u32(&mut b, c.adapter_hidden);
    u32(&mut b, c.mlp_hidden);
    b.extend_from_slice(&c.residual_ratio.to_le_bytes());
    b.extend_from_slice(&c.tau_init.to_le_bytes());
    u32(&mut b, meta.num_states);
    u32(&mut b, meta.num_objects);
    b.push(model.mask.bits());
    s(&mut b, &meta.dataset_hash);
    u32(&mut b, model.store.len());
    for (_, name, p) in model.store.iter() {
        s(&mut b, name);
        u32(&mut b, p.value.shape().len());
        for &d in p.value.shape() {
            u32(&mut b, d);
        }
        for v in p.value.data() {
            b.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&b);
    b.extend_from_slice(&digest);
    b
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], String> {
        if self.buf.len() - self.pos < n {
            return Err(format!("truncated while reading {what}"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u32(&mut self, what: &str) -> Result<usize, String> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()) as usize)
    }
    fn f64(&mut self, what: &str) -> Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
    fn string(&mut self, what: &str) -> Result<String, String> {
        let n = self.u32(what)?;
        String::from_utf8(self.take(n, what)?.to_vec()).map_err(|_| format!("{what} is not UTF-8"))
    }
}

fn decode(bytes: &[u8]) -> Result<(LprModel, CheckpointMeta), String> {
    if bytes.len() < 4 + 32 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err("not a checkpoint (bad magic or too short)".into());
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err("checksum mismatch (file is corrupted or truncated)".into());
    }
    let mut c = Cursor { buf: body, pos: 4 };
    let version = c.u32("version")?;
    if version != CHECKPOINT_VERSION as usize {
        return Err(format!("unsupported version {version}"));
    }
    let config = ModelConfig {
        dim: c.u32("dim")?,
        adapter_hidden: c.u32("adapter width")?,
        mlp_hidden: c.u32("mlp width")?,
        residual_ratio: c.f64("residual ratio")?,
        tau_init: c.f64("initial temperature")?,
    };
    if config.dim == 0 || config.adapter_hidden == 0 || config.mlp_hidden == 0 || !(config.tau_init > 0.0) {
        return Err("invalid model dimensions in header".into());
    }
    let meta_states = c.u32("state count")?;
    let meta_objects = c.u32("object count")?;
    let bits = c.take(1, "branch mask")?[0];
    let mask = BranchMask::from_bits(bits).ok_or_else(|| format!("invalid branch mask {bits}"))?;
    let dataset_hash = c.string("dataset hash")?;

    let mut model = LprModel::new(config, 0);
    model.mask = mask;
    let count = c.u32("parameter count")?;
    if count != model.store.len() {
        return Err(format!(
            "expected {} parameters, file has {count}",
            model.store.len()
        ));
    }
    for _ in 0..count {
        let name = c.string("parameter name")?;
        let id = model
            .store
            .id(&name)
            .ok_or_else(|| format!("unknown parameter {name:?}"))?;
        let rank = c.u32(&name)?;
        if rank > 4 {
            return Err(format!("{name}: implausible rank {rank}"));
        }
        let shape = (0..rank).map(|_| c.u32(&name)).collect::<Result<Vec<_>, _>>()?;
        let expected = model.store.value(id).shape().to_vec();
        if shape != expected {
            return Err(format!("{name}: shape {shape:?}, expected {expected:?}"));
        }
        let n: usize = shape.iter().product();
        let data = c
            .take(n * 8, &name)?
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        model.store.get_mut(id).value = Tensor::new(shape, data).map_err(|e| e.to_string())?;
    }
    if c.pos != body.len() {
        return Err("trailing bytes before checksum".into());
    }
    Ok((
        model,
        CheckpointMeta {
            num_states: meta_states,
            num_objects: meta_objects,
            dataset_hash,
        },
    ))
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(LprModel, CheckpointMeta)> {
    decode(bytes).map_err(|reason| Error::Checkpoint {
        path: "<memory>".into(),
        reason,
    })
}

/// Hex SHA-256 of the encoded checkpoint.
pub fn checkpoint_hash(model: &LprModel, meta: &CheckpointMeta) -> String {
    hex::encode(Sha256::digest(encode_checkpoint(model, meta)))
}

pub fn save_checkpoint(path: &Path, model: &LprModel, meta: &CheckpointMeta) -> Result<()> {
    let tmp = path.with_extension("partial");
    fs::write(&tmp, encode_checkpoint(model, meta))?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(LprModel, CheckpointMeta)> {
    let bytes = fs::read(path)?;
    decode(&bytes).map_err(|reason| Error::Checkpoint {
        path: path.to_path_buf(),
        reason,
    })
}
