//! Float checkpoint file.
//!
//! Little-endian layout:
//!
//! | bytes | field |
//! |-------|-------|
//! | 4     | magic `MDCK` |
//! | 4     | version (u32, currently 1) |
//! | 28    | n_layers, d_model, n_heads, d_ff, vocab_size, max_len, n_classes (u32 each) |
//! | 4     | dropout_rate (f32) |
//! | 8     | parameter count (u64) |
//! | 4·n   | parameters as f32, tensors in [`Layout`](super::Layout) order |

use std::io::{Read, Write};

use thiserror::Error;

use super::{ModelConfig, ModelParams};

pub const MAGIC: &[u8; 4] = b"MDCK";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint (bad magic)")]
    Magic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
}

pub(crate) fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

pub(crate) fn write_config(out: &mut Vec<u8>, c: &ModelConfig) {
    for v in [c.n_layers, c.d_model, c.n_heads, c.d_ff, c.vocab_size, c.max_len, c.n_classes] {
        put_u32(out, v);
    }
    out.extend_from_slice(&c.dropout_rate.to_le_bytes());
}

/// Cursor over an in-memory file.
pub(crate) struct Reader<'a> {
    pub buf: &'a [u8],
    pub pos: usize,
}

impl<'a> Reader<'a> {
    pub fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.buf.len() - self.pos < n {
            return Err(CheckpointError::Corrupt(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f32(&mut self) -> Result<f32, CheckpointError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn f32s(&mut self, n: usize) -> Result<Vec<f32>, CheckpointError> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| CheckpointError::Corrupt("size overflow".into()))?)?;
        Ok(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }

    pub fn header(&mut self, magic: &[u8; 4], version: u32) -> Result<ModelConfig, CheckpointError> {
        if self.take(4).map_err(|_| CheckpointError::Magic)? != magic {
            return Err(CheckpointError::Magic);
        }
        let v = self.u32()?;
        if v != version {
            return Err(CheckpointError::Version(v));
        }
        let mut f = [0usize; 7];
        for x in f.iter_mut() {
            *x = self.u32()? as usize;
        }
        let config = ModelConfig {
            n_layers: f[0],
            d_model: f[1],
            n_heads: f[2],
            d_ff: f[3],
            vocab_size: f[4],
            max_len: f[5],
            n_classes: f[6],
            dropout_rate: self.f32()?,
        };
        config.validate().map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
        Ok(config)
    }

    pub fn finish(&self) -> Result<(), CheckpointError> {
        if self.pos != self.buf.len() {
            return Err(CheckpointError::Corrupt(format!("{} trailing bytes", self.buf.len() - self.pos)));
        }
        Ok(())
    }
}

pub fn to_bytes(params: &ModelParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(48 + params.data.len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    write_config(&mut out, &params.config);
    out.extend_from_slice(&(params.data.len() as u64).to_le_bytes());
    for v in &params.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn from_bytes(buf: &[u8]) -> Result<ModelParams, CheckpointError> {
    let mut r = Reader { buf, pos: 0 };
    let config = r.header(MAGIC, VERSION)?;
    let mut params = ModelParams::<f32>::zeros(config);
    let n = r.u64()? as usize;
    if n != params.data.len() {
        return Err(CheckpointError::Corrupt(format!(
            "{n} parameters stored, config implies {}",
            params.data.len()
        )));
    }
    params.data = r.f32s(n)?;
    r.finish()?;
    Ok(params)
}

pub fn write_checkpoint(params: &ModelParams, mut w: impl Write) -> Result<(), CheckpointError> {
    w.write_all(&to_bytes(params))?;
    Ok(())
}

pub fn read_checkpoint(mut r: impl Read) -> Result<ModelParams, CheckpointError> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    from_bytes(&buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_byte_exact() {
        let p: ModelParams = ModelParams::init(ModelConfig::tiny(), 8);
        let bytes = to_bytes(&p);
        let back = from_bytes(&bytes).unwrap();
        assert_eq!(back, p);
        assert_eq!(to_bytes(&back), bytes);
        assert_eq!(&bytes[..4], b"MDCK");
        assert_eq!(bytes.len(), 4 + 4 + 28 + 4 + 8 + 4 * p.data.len());
    }

    #[test]
    fn rejects_damaged_files() {
        let p: ModelParams = ModelParams::init(ModelConfig::tiny(), 8);
        let bytes = to_bytes(&p);
        assert!(matches!(from_bytes(b"NOPE"), Err(CheckpointError::Magic)));
        assert!(matches!(from_bytes(&bytes[..bytes.len() - 1]), Err(CheckpointError::Corrupt(_))));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(from_bytes(&extra), Err(CheckpointError::Corrupt(_))));
        let mut v2 = bytes;
        v2[4] = 2;
        assert!(matches!(from_bytes(&v2), Err(CheckpointError::Version(2))));
    }
}
