//! Self-describing binary checkpoints.
//!
//! Layout (all integers little-endian u32 unless noted):
//!
//! ```text
//! magic    8 bytes  "DHZCKPT1"
//! version  u32      currently 1
//! config   u32 len + that many bytes: canonical configuration string
//! count    u32      number of named tensors
//! tensor   u32 len + name bytes
//!          4×u32    shape (n, c, h, w), all ≥ 1
//!          numel × f32 LE payload
//! ```
//!
//! Values restore bitwise: the payload is the raw f32 bit pattern. The
//! decoder is total — every read is bounds-checked, declared sizes are
//! validated against the remaining input before anything is allocated, and
//! non-finite payloads are rejected (training never saves them).

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::net::{config_to_string, parse_config, NetworkConfig};
use crate::tensor::{Graph, Shape, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"DHZCKPT1";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Decoded checkpoint: the configuration echo and the named parameter
/// tensors in file order.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub config: NetworkConfig,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Copy stored values into every parameter of `graph`, matched by name.
    /// A parameter with no stored tensor, or one stored at a different
    /// shape, is a config mismatch.
    pub fn restore_into(&self, graph: &mut Graph) -> Result<()> {
        let by_name: HashMap<&str, &Tensor> =
            self.tensors.iter().map(|(n, t)| (n.as_str(), t)).collect();
        for param in graph.params_mut() {
            let stored = by_name.get(param.name.as_str()).ok_or_else(|| {
                Error::CheckpointMismatch(format!("no stored tensor for parameter `{}`", param.name))
            })?;
            if stored.shape() != param.value.shape() {
                return Err(Error::CheckpointMismatch(format!(
                    "parameter `{}` has shape {}, checkpoint stores {}",
                    param.name,
                    param.value.shape(),
                    stored.shape()
                )));
            }
            param.value.data_mut().copy_from_slice(stored.data());
        }
        Ok(())
    }
}

fn push_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn push_str(out: &mut Vec<u8>, s: &str) {
    push_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

/// Serialize the configuration echo plus every parameter of the given
/// graphs, in order.
pub fn encode_checkpoint(config: &NetworkConfig, graphs: &[&Graph]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    push_u32(&mut out, CHECKPOINT_VERSION);
    push_str(&mut out, &config_to_string(config));
    let count: usize = graphs.iter().map(|g| g.params().len()).sum();
    push_u32(&mut out, count as u32);
    for graph in graphs {
        for param in graph.params() {
            push_str(&mut out, &param.name);
            let s = param.value.shape();
            for dim in [s.n, s.c, s.h, s.w] {
                push_u32(&mut out, dim as u32);
            }
            for &v in param.value.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::CheckpointFormat(format!(
                "file ends inside {what} (need {len} bytes at offset {})",
                self.pos
            ))
        })?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let len = self.u32(what)? as usize;
        let raw = self.take(len, what)?;
        String::from_utf8(raw.to_vec())
            .map_err(|_| Error::CheckpointFormat(format!("{what} is not UTF-8")))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(8, "magic")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::CheckpointFormat("bad magic bytes".into()));
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointFormat(format!(
            "unsupported version {version}, expected {CHECKPOINT_VERSION}"
        )));
    }
    let config_echo = r.string("config echo")?;
    let config = parse_config(&config_echo)
        .map_err(|e| Error::CheckpointFormat(format!("config echo does not parse: {e}")))?;

    let count = r.u32("tensor count")? as usize;
    let mut tensors = Vec::new();
    for i in 0..count {
        let name = r.string("tensor name")?;
        let mut dims = [0usize; 4];
        for d in &mut dims {
            *d = r.u32("tensor shape")? as usize;
            if *d == 0 {
                return Err(Error::CheckpointFormat(format!("tensor {i} has a zero extent")));
            }
        }
        let numel = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::CheckpointFormat(format!("tensor {i} shape overflows")))?;
        let byte_len = numel
            .checked_mul(4)
            .ok_or_else(|| Error::CheckpointFormat(format!("tensor {i} shape overflows")))?;
        let raw = r.take(byte_len, "tensor payload")?;
        let mut data = Vec::with_capacity(numel);
        for chunk in raw.chunks_exact(4) {
            let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
            if !v.is_finite() {
                return Err(Error::CheckpointFormat(format!("tensor `{name}` holds non-finite values")));
            }
            data.push(v);
        }
        let shape = Shape::new(dims[0], dims[1], dims[2], dims[3]);
        tensors.push((name, Tensor::from_vec(shape, data).expect("numel matches shape")));
    }
    if r.pos != bytes.len() {
        return Err(Error::CheckpointFormat(format!(
            "{} trailing bytes after last tensor",
            bytes.len() - r.pos
        )));
    }
    Ok(Checkpoint { config, tensors })
}

/// Write a checkpoint for the generator and (when present) discriminator.
/// The write goes through a sibling temp file and a rename, so an interrupted
/// save never leaves a truncated checkpoint behind.
pub fn save_checkpoint(
    path: impl AsRef<Path>,
    config: &NetworkConfig,
    generator: &Graph,
    discriminator: Option<&Graph>,
) -> Result<()> {
    let path = path.as_ref();
    let mut graphs = vec![generator];
    graphs.extend(discriminator);
    let bytes = encode_checkpoint(config, &graphs);
    let tmp = path.with_extension("ckpt.tmp");
    fs::write(&tmp, &bytes).map_err(|e| Error::io(tmp.display().to_string(), e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    decode_checkpoint(&bytes)
}
