//! Binary dataset container.
//!
//! Little-endian. Header: magic `MLCL`, version u16, grammar u8, layout u8,
//! panel size u16, instance count u32. Each instance is stored as a u32
//! payload length, the payload, and the CRC32 of the payload. The payload
//! holds the orientation, the rule indices, 16 symbolic panels, 16 raw
//! rasters, the sparse and dense meta-target bit strings, the 1-based correct
//! index and the seed.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::rules::{encode_dense, encode_sparse, enumerate_rule_space, AbstractStructure, Grammar, Rule};

use super::{Dataset, Layout, Object, Orientation, PanelSpec, Raster, RpmInstance};

pub const MAGIC: [u8; 4] = *b"MLCL";
pub const FORMAT_VERSION: u16 = 1;

const HEADER_LEN: usize = 14;

fn bit_string(bits: &[bool]) -> Vec<u8> {
    bits.iter().map(|b| if *b { b'1' } else { b'0' }).collect()
}

fn encode_instance(inst: &RpmInstance, out: &mut Vec<u8>) -> Result<()> {
    out.push(match inst.orientation {
        Orientation::Row => 0,
        Orientation::Column => 1,
    });
    let rules = inst.structure.label_set();
    out.push(rules.len() as u8);
    out.extend(rules.iter().map(|r| *r as u8));
    for p in &inst.panels {
        out.push(p.count() as u8);
        for o in p.objects() {
            out.extend([o.position, o.kind, o.size, o.color]);
        }
    }
    for r in &inst.rasters {
        out.extend_from_slice(r.pixels());
    }
    for target in [encode_sparse(&inst.structure)?, encode_dense(&inst.structure)?] {
        let s = bit_string(target.bits());
        out.push(s.len() as u8);
        out.extend(s);
    }
    out.push(inst.correct_index);
    out.extend(inst.seed.to_le_bytes());
    Ok(())
}

/// Serializes a dataset into the container format.
pub fn encode_dataset(dataset: &Dataset) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend(MAGIC);
    out.extend(FORMAT_VERSION.to_le_bytes());
    out.push(dataset.grammar().code());
    out.push(dataset.layout.code());
    out.extend(dataset.panel_size.to_le_bytes());
    out.extend((dataset.instances.len() as u32).to_le_bytes());
    let mut payload = Vec::new();
    for inst in &dataset.instances {
        if inst.layout != dataset.layout || inst.rasters.iter().any(|r| r.size() != dataset.panel_size) {
            return Err(Error::InvalidArgument(format!(
                "instance {} does not match the dataset layout or panel size",
                inst.seed
            )));
        }
        payload.clear();
        encode_instance(inst, &mut payload)?;
        out.extend((payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&payload);
        out.extend(crc32fast::hash(&payload).to_le_bytes());
    }
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    index: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::Corrupt {
                index: self.index,
                reason: "record shorter than its fields".into(),
            });
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn corrupt(&self, reason: impl Into<String>) -> Error {
        Error::Corrupt {
            index: self.index,
            reason: reason.into(),
        }
    }
}

fn decode_instance(payload: &[u8], index: usize, layout: Layout, panel_size: u16, by_index: &[Rule]) -> Result<RpmInstance> {
    let mut c = Cursor { buf: payload, index };
    let orientation = match c.u8()? {
        0 => Orientation::Row,
        1 => Orientation::Column,
        v => return Err(c.corrupt(format!("orientation code {v}"))),
    };
    let n_rules = c.u8()?;
    let mut rules = Vec::with_capacity(usize::from(n_rules));
    for _ in 0..n_rules {
        let i = usize::from(c.u8()?);
        rules.push(*by_index.get(i).ok_or_else(|| c.corrupt(format!("rule index {i}")))?);
    }
    let structure = AbstractStructure::new(layout.grammar(), rules).map_err(|e| c.corrupt(e.to_string()))?;
    let mut panels = Vec::with_capacity(16);
    for _ in 0..16 {
        let n = usize::from(c.u8()?);
        let bytes = c.take(4 * n)?;
        let objects = bytes
            .chunks_exact(4)
            .map(|b| Object {
                position: b[0],
                kind: b[1],
                size: b[2],
                color: b[3],
            })
            .collect();
        panels.push(PanelSpec::new(layout.lattice(), objects).map_err(|e| c.corrupt(e.to_string()))?);
    }
    let area = usize::from(panel_size).pow(2);
    let mut rasters = Vec::with_capacity(16);
    for _ in 0..16 {
        rasters.push(Raster::new(panel_size, c.take(area)?.to_vec())?);
    }
    let sparse = c.u8().and_then(|n| c.take(usize::from(n)))?.to_vec();
    let dense = c.u8().and_then(|n| c.take(usize::from(n)))?.to_vec();
    if sparse != bit_string(encode_sparse(&structure)?.bits()) || dense != bit_string(encode_dense(&structure)?.bits()) {
        return Err(c.corrupt("meta-target does not match the rule list"));
    }
    let correct_index = c.u8()?;
    if !(1..=8).contains(&correct_index) {
        return Err(c.corrupt(format!("correct index {correct_index}")));
    }
    let seed = u64::from_le_bytes(c.take(8)?.try_into().expect("8 bytes"));
    if !c.buf.is_empty() {
        return Err(c.corrupt("trailing bytes in record"));
    }
    Ok(RpmInstance {
        layout,
        structure,
        orientation,
        panels,
        rasters,
        correct_index,
        seed,
    })
}

/// Parses a container produced by [`encode_dataset`].
pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset> {
    if bytes.len() < 4 || bytes[..4] != MAGIC {
        return Err(Error::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated("header".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let grammar = Grammar::from_code(bytes[6]).ok_or_else(|| Error::Corrupt {
        index: 0,
        reason: format!("grammar code {}", bytes[6]),
    })?;
    let layout = Layout::from_code(bytes[7])
        .filter(|l| l.grammar() == grammar)
        .ok_or_else(|| Error::Corrupt {
            index: 0,
            reason: format!("layout code {} for grammar {grammar}", bytes[7]),
        })?;
    let panel_size = u16::from_le_bytes([bytes[8], bytes[9]]);
    let count = u32::from_le_bytes(bytes[10..14].try_into().expect("4 bytes")) as usize;

    let mut by_index = enumerate_rule_space(grammar);
    by_index.sort_by_key(Rule::sparse_index);

    let mut rest = &bytes[HEADER_LEN..];
    let mut instances = Vec::with_capacity(count.min(1 << 20));
    for index in 0..count {
        if rest.len() < 4 {
            return Err(Error::Truncated(format!("record {index} of {count}")));
        }
        let len = u32::from_le_bytes(rest[..4].try_into().expect("4 bytes")) as usize;
        if rest.len() < 8 + len {
            return Err(Error::Truncated(format!("record {index} of {count}")));
        }
        let payload = &rest[4..4 + len];
        let crc = u32::from_le_bytes(rest[4 + len..8 + len].try_into().expect("4 bytes"));
        if crc32fast::hash(payload) != crc {
            return Err(Error::Checksum { index });
        }
        instances.push(decode_instance(payload, index, layout, panel_size, &by_index)?);
        rest = &rest[8 + len..];
    }
    if !rest.is_empty() {
        return Err(Error::Corrupt {
            index: count,
            reason: format!("{} bytes after the last record", rest.len()),
        });
    }
    Ok(Dataset {
        layout,
        panel_size,
        instances,
    })
}

pub fn write_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_dataset(dataset)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&bytes).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::new();
    BufReader::new(file).read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    decode_dataset(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rpmgen::generate_dataset;

    #[test]
    fn round_trip() {
        for layout in Layout::ALL {
            let d = generate_dataset(layout, 5, 1, 16, 1).unwrap();
            let bytes = encode_dataset(&d).unwrap();
            assert_eq!(decode_dataset(&bytes).unwrap(), d);
        }
    }

    #[test]
    fn typed_errors() {
        let d = generate_dataset(Layout::Center, 3, 2, 16, 1).unwrap();
        let bytes = encode_dataset(&d).unwrap();

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_dataset(&bad), Err(Error::BadMagic)));

        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(decode_dataset(&bad), Err(Error::Version { found: 9, .. })));

        let mut bad = bytes.clone();
        let k = bytes.len() - 40;
        bad[k] ^= 0x55;
        assert!(matches!(decode_dataset(&bad), Err(Error::Checksum { index: 2 })));

        assert!(matches!(decode_dataset(&bytes[..bytes.len() - 3]), Err(Error::Truncated(_))));
    }
}
