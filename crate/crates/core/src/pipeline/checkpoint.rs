//! Weight checkpoints: `MLCK`, u16 version, u32-prefixed JSON network
//! config, u32 parameter count, then per parameter a u32-prefixed name, u32
//! rank, u64 dims and little-endian f64 values; a CRC32 of everything before
//! it closes the file.

use std::path::Path;

use super::network::{NetConfig, NetworkSet};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

const MAGIC: &[u8; 4] = b"MLCK";
const VERSION: u16 = 1;

pub fn encode_checkpoint(net: &NetworkSet) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let cfg = serde_json::to_vec(&net.config)?;
    out.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
    out.extend_from_slice(&cfg);
    out.extend_from_slice(&(net.store.len() as u32).to_le_bytes());
    for (_, name, t) in net.store.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for d in t.shape() {
            out.extend_from_slice(&(*d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Truncated(format!("checkpoint ends at byte {}", self.buf.len())))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

fn corrupt(reason: impl Into<String>) -> Error {
    Error::Corrupt {
        index: 0,
        reason: reason.into(),
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<NetworkSet> {
    if bytes.len() < 10 {
        return Err(Error::Truncated("checkpoint header".into()));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::BadMagic);
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::Version {
            found: version,
            expected: VERSION,
        });
    }
    let (body, crc) = bytes.split_at(bytes.len() - 4);
    if crc32fast::hash(body) != u32::from_le_bytes(crc.try_into().expect("4 bytes")) {
        return Err(Error::Checksum { index: 0 });
    }
    let mut r = Reader { buf: body, pos: 6 };
    let len = r.u32()? as usize;
    let config: NetConfig = serde_json::from_slice(r.take(len)?)?;
    let mut net = NetworkSet::new(config, 0);
    let count = r.u32()? as usize;
    if count != net.store.len() {
        return Err(corrupt(format!("{count} parameters, network has {}", net.store.len())));
    }
    let ids: Vec<_> = net.store.ids().collect();
    for id in ids {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?).map_err(|_| corrupt("parameter name is not utf-8"))?;
        if name != net.store.name(id) {
            return Err(corrupt(format!("parameter `{name}`, expected `{}`", net.store.name(id))));
        }
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        if shape != net.store.get(id).shape() {
            return Err(corrupt(format!("`{name}` has shape {shape:?}, expected {:?}", net.store.get(id).shape())));
        }
        let n: usize = shape.iter().product();
        let raw = r.take(n * 8)?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        *net.store.get_mut(id) = Tensor::new(shape, data)?;
    }
    if r.pos != body.len() {
        return Err(corrupt("trailing bytes"));
    }
    Ok(net)
}

pub fn save_checkpoint(net: &NetworkSet, path: &Path) -> Result<()> {
    std::fs::write(path, encode_checkpoint(net)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<NetworkSet> {
    decode_checkpoint(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}
