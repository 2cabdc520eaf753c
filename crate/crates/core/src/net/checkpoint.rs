//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! b"PHENNCKP"  u32 version  u32 header_len  header (UTF-8 key=value lines)
//! u32 tensor_count
//! per tensor: u32 name_len  name  u32 ndim  u64 dims[ndim]  f64 data[prod(dims)]
//! u32 crc32 of every preceding byte
//! ```

use std::fs;
use std::path::Path;

use super::layers::ParamTensor;
use super::model::{check_params, InitRecord, NetworkConfig, NetworkParams};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"PHENNCKP";
pub const VERSION: u32 = 1;

pub fn encode_checkpoint(params: &NetworkParams) -> Vec<u8> {
    let mut header = params.config.to_text();
    header.push_str(&format!("init_scheme={}\ninit_seed={}\n", params.init.scheme, params.init.seed));

    let mut out = Vec::with_capacity(64 + header.len() + 8 * params.count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&(params.tensors.len() as u32).to_le_bytes());
    for t in &params.tensors {
        out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
        for &d in &t.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::CorruptCheckpoint(format!("record overruns payload at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self, len: usize) -> Result<String> {
        String::from_utf8(self.take(len)?.to_vec()).map_err(|_| Error::CorruptCheckpoint("non UTF-8 text".into()))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<NetworkParams> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::CorruptCheckpoint("missing checkpoint magic".into()));
    }
    if bytes.len() < MAGIC.len() + 4 {
        return Err(Error::Checksum);
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 4);
    if crc32fast::hash(body) != u32::from_le_bytes(trailer.try_into().expect("4 bytes")) {
        return Err(Error::Checksum);
    }
    let mut r = Reader {
        bytes: body,
        pos: MAGIC.len(),
    };
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::VersionMismatch {
            expected: VERSION,
            found: version,
        });
    }
    let header_len = r.u32()? as usize;
    let header = r.string(header_len)?;
    let config = NetworkConfig::parse(&header)?;
    let mut init = InitRecord {
        scheme: String::new(),
        seed: 0,
    };
    for line in header.lines() {
        if let Some(v) = line.strip_prefix("init_scheme=") {
            init.scheme = v.to_string();
        } else if let Some(v) = line.strip_prefix("init_seed=") {
            init.seed = v.parse().map_err(|_| Error::CorruptCheckpoint(format!("init seed `{v}`")))?;
        }
    }

    let count = r.u32()? as usize;
    let mut tensors = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = r.string(name_len)?;
        let ndim = r.u32()? as usize;
        let shape = (0..ndim).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let len = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| Error::CorruptCheckpoint(format!("tensor `{name}` shape overflows")))?;
        let raw = r.take(len.checked_mul(8).ok_or_else(|| Error::CorruptCheckpoint("tensor too large".into()))?)?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        tensors.push(ParamTensor { name, shape, data });
    }
    if r.pos != body.len() {
        return Err(Error::CorruptCheckpoint(format!("{} trailing bytes", body.len() - r.pos)));
    }
    let params = NetworkParams { config, tensors, init };
    check_params(&params)?;
    Ok(params)
}

pub fn save_checkpoint(params: &NetworkParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_checkpoint(params)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<NetworkParams> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

/// Loads a checkpoint and requires it to have been built from `expected`
/// (the seed is not compared).
pub fn load_checkpoint_for(path: impl AsRef<Path>, expected: &NetworkConfig) -> Result<NetworkParams> {
    let params = load_checkpoint(path)?;
    let mut found = params.config.clone();
    found.seed = expected.seed;
    if &found != expected {
        return Err(Error::ConfigMismatch(format!(
            "checkpoint has input {} widths {:?}, expected input {} widths {:?}",
            params.config.input_size, params.config.widths, expected.input_size, expected.widths
        )));
    }
    Ok(params)
}
