//! Flat binary checkpoint, all integers and floats little-endian:
//!
//! ```text
//! magic        8 bytes  "DSUPCKPT"
//! version      u32      (1)
//! heads, embed_dim, seq_len, bottleneck_dim, hidden_dim   u32 each
//! seed         u64
//! learning_rate, momentum                                  f64 each
//! epochs, batch_size                                       u32 each
//! tensor_count u32
//! per tensor, in canonical order (wq.0..wq.H-1, wk.*, wv.*, wo, ln_gain,
//! ln_bias, enc1_w, enc1_b, enc2_w, enc2_b, dec1_w, dec1_b, dec2_w, dec2_b,
//! bcast_scale, bcast_bias):
//!   name_len u32, name (utf-8), rank u32, dims u32 × rank,
//!   values f64 × product(dims), row-major
//! ```

use std::io::{Read, Write};

use super::{init_model, Model, ModelConfig};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"DSUPCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

fn io_err(e: std::io::Error) -> Error {
    Error::Checkpoint(e.to_string())
}

pub fn write_checkpoint(model: &Model, out: &mut impl Write) -> Result<()> {
    let c = &model.config;
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for v in [c.heads, c.embed_dim, c.seq_len, c.bottleneck_dim, c.hidden_dim] {
        buf.extend_from_slice(&(v as u32).to_le_bytes());
    }
    buf.extend_from_slice(&c.seed.to_le_bytes());
    buf.extend_from_slice(&c.learning_rate.to_le_bytes());
    buf.extend_from_slice(&c.momentum.to_le_bytes());
    buf.extend_from_slice(&(c.epochs as u32).to_le_bytes());
    buf.extend_from_slice(&(c.batch_size as u32).to_le_bytes());
    let shapes = model.params.shapes();
    let tensors = model.params.tensors();
    buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for ((name, dims), (_, values)) in shapes.iter().zip(&tensors) {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(dims.len() as u32).to_le_bytes());
        for d in dims {
            buf.extend_from_slice(&(*d as u32).to_le_bytes());
        }
        for v in values.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.write_all(&buf).map_err(io_err)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Checkpoint("truncated file".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn read_checkpoint(input: &mut impl Read) -> Result<Model> {
    let mut buf = Vec::new();
    input.read_to_end(&mut buf).map_err(io_err)?;
    let mut c = Cursor { buf: &buf, pos: 0 };
    if c.take(8)? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = c.u32()?;
    if version != CHECKPOINT_VERSION as usize {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let config = ModelConfig {
        heads: c.u32()?,
        embed_dim: c.u32()?,
        seq_len: c.u32()?,
        bottleneck_dim: c.u32()?,
        hidden_dim: c.u32()?,
        seed: c.u64()?,
        learning_rate: c.f64()?,
        momentum: c.f64()?,
        epochs: c.u32()?,
        batch_size: c.u32()?,
    };
    let mut model = init_model(&config)?;
    let expected = model.params.shapes();
    let count = c.u32()?;
    if count != expected.len() {
        return Err(Error::Checkpoint(format!(
            "expected {} tensors, found {count}",
            expected.len()
        )));
    }
    let mut values = Vec::with_capacity(count);
    for (name, dims) in &expected {
        let len = c.u32()?;
        let got = std::str::from_utf8(c.take(len)?)
            .map_err(|_| Error::Checkpoint("tensor name is not utf-8".into()))?;
        if got != name {
            return Err(Error::Checkpoint(format!("expected tensor {name}, found {got}")));
        }
        let rank = c.u32()?;
        let got_dims = (0..rank).map(|_| c.u32()).collect::<Result<Vec<_>>>()?;
        if &got_dims != dims {
            return Err(Error::Checkpoint(format!(
                "tensor {name}: shape {got_dims:?}, expected {dims:?}"
            )));
        }
        let n: usize = dims.iter().product();
        values.push((0..n).map(|_| c.f64()).collect::<Result<Vec<_>>>()?);
    }
    if c.pos != buf.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    for ((_, dst), src) in model.params.tensors_mut().into_iter().zip(values) {
        dst.copy_from_slice(&src);
    }
    Ok(model)
}
