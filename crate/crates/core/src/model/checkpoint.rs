//! Binary checkpoints. Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes   "TRDCKPT\0"
//! version    u32       1
//! config     6 × u64   vocab_size, d_model, layers, heads, d_ff, max_length
//! count      u32       number of tensors
//! tensor × count:
//!   name_len u32, name (UTF-8)
//!   ndim     u32, dims (ndim × u64)
//!   data     prod(dims) × f64 (row-major)
//! ```
//!
//! Positional encodings are fixed and recomputed on load.

use std::io::{Read, Write};
use std::path::Path;

use super::{ModelConfig, ModelParams};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"TRDCKPT\0";
const VERSION: u32 = 1;

fn shape_of(name: &str, cfg: &ModelConfig) -> Vec<usize> {
    let (d, ff) = (cfg.d_model, cfg.d_ff);
    match name.rsplit('.').next().unwrap_or(name) {
        "token_embedding" => vec![cfg.vocab_size, d],
        "w_q" | "w_k" | "w_v" | "w_o" => vec![d, d],
        "w_ff1" => vec![d, ff],
        "w_ff2" => vec![ff, d],
        "b_ff1" => vec![ff],
        _ => vec![d],
    }
}

pub fn write_checkpoint(params: &ModelParams, mut w: impl Write) -> Result<()> {
    let io = |e: std::io::Error| Error::Checkpoint(e.to_string());
    let cfg = &params.config;
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io)?;
    for v in [cfg.vocab_size, cfg.d_model, cfg.layers, cfg.heads, cfg.d_ff, cfg.max_length] {
        w.write_all(&(v as u64).to_le_bytes()).map_err(io)?;
    }
    let tensors = params.tensors();
    w.write_all(&(tensors.len() as u32).to_le_bytes()).map_err(io)?;
    for (name, data) in tensors {
        let shape = shape_of(&name, cfg);
        w.write_all(&(name.len() as u32).to_le_bytes()).map_err(io)?;
        w.write_all(name.as_bytes()).map_err(io)?;
        w.write_all(&(shape.len() as u32).to_le_bytes()).map_err(io)?;
        for dim in shape {
            w.write_all(&(dim as u64).to_le_bytes()).map_err(io)?;
        }
        for x in data {
            w.write_all(&x.to_le_bytes()).map_err(io)?;
        }
    }
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| Error::Checkpoint(format!("truncated file: {e}")))?;
        Ok(buf)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    fn u64(&mut self) -> Result<usize> {
        usize::try_from(u64::from_le_bytes(self.bytes()?)).map_err(|_| Error::Checkpoint("dimension overflow".into()))
    }
}

pub fn read_checkpoint(r: impl Read) -> Result<ModelParams> {
    let mut r = Reader { inner: r };
    if &r.bytes::<8>()? != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let config = ModelConfig {
        vocab_size: r.u64()?,
        d_model: r.u64()?,
        layers: r.u64()?,
        heads: r.u64()?,
        d_ff: r.u64()?,
        max_length: r.u64()?,
    };
    let mut params = ModelParams::init(0, config)?;
    let count = r.u32()? as usize;
    let mut tensors = params.tensors_mut();
    if count != tensors.len() {
        return Err(Error::Checkpoint(format!("expected {} tensors, found {count}", tensors.len())));
    }
    for (name, dst) in tensors.iter_mut() {
        let len = r.u32()? as usize;
        let mut raw = vec![0u8; len];
        r.inner
            .read_exact(&mut raw)
            .map_err(|e| Error::Checkpoint(format!("truncated file: {e}")))?;
        let found = String::from_utf8(raw).map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
        if &found != name {
            return Err(Error::Checkpoint(format!("expected tensor `{name}`, found `{found}`")));
        }
        let ndim = r.u32()? as usize;
        let dims = (0..ndim).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
        if dims != shape_of(name, &config) {
            return Err(Error::Checkpoint(format!("tensor `{name}` has shape {dims:?}")));
        }
        for x in dst.iter_mut() {
            *x = f64::from_le_bytes(r.bytes()?);
        }
    }
    drop(tensors);
    Ok(params)
}

pub fn save_checkpoint(params: &ModelParams, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_checkpoint(params, &mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(std::io::BufReader::new(file))
}
