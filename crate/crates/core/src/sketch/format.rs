//! Portable binary sketch files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "KMLT"            magic
//! u16               format version
//! u64               payload length in bytes (everything up to the CRC)
//! -- payload --
//! u16 t, u8 log2_r, u32 u, u8 M, u32 k, u8 canonical
//! u64 x t           instance seeds
//! u64               total updates
//! per instance:
//!   u64             level-presence bitmap (bit w-1 set = level w stored)
//!   per stored level: r cells of (i32 value, u16 label)
//! -- trailer --
//! u32               CRC32 of every preceding byte
//! ```

use std::io::{Read, Write};

use super::{AbundanceSketch, KmerConfig, Level, SketchError, SketchInstance, SketchParams};

pub const MAGIC: &[u8; 4] = b"KMLT";
pub const FORMAT_VERSION: u16 = 1;
const PREFIX_BYTES: usize = 4 + 2 + 8;

impl AbundanceSketch {
    /// Size in bytes of [`AbundanceSketch::to_bytes`].
    pub fn serialized_len(&self) -> u64 {
        PREFIX_BYTES as u64 + self.payload_len() + 4
    }

    fn payload_len(&self) -> u64 {
        let t = self.instances.len() as u64;
        let levels: u64 = self.instances.iter().map(|i| i.allocated_levels() as u64).sum();
        (2 + 1 + 4 + 1 + 4 + 1) + 8 * t + 8 + 8 * t + levels * self.params.counters() as u64 * super::CELL_BYTES
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.serialized_len() as usize);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.payload_len().to_le_bytes());
        let p = &self.params;
        out.extend_from_slice(&(p.instances() as u16).to_le_bytes());
        out.push(p.log2_counters as u8);
        out.extend_from_slice(&p.aux_universe.to_le_bytes());
        out.push(p.levels as u8);
        out.extend_from_slice(&self.k.to_le_bytes());
        out.push(self.canonical as u8);
        for s in &p.seeds {
            out.extend_from_slice(&s.to_le_bytes());
        }
        out.extend_from_slice(&self.total_updates.to_le_bytes());
        for inst in &self.instances {
            let mut bitmap = 0u64;
            for idx in 0..p.levels as usize {
                if inst.level_slot(idx).is_some() {
                    bitmap |= 1 << idx;
                }
            }
            out.extend_from_slice(&bitmap.to_le_bytes());
            for idx in 0..p.levels as usize {
                if let Some(level) = inst.level_slot(idx) {
                    for (v, l) in level.values.iter().zip(level.labels.iter()) {
                        out.extend_from_slice(&v.to_le_bytes());
                        out.extend_from_slice(&l.to_le_bytes());
                    }
                }
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), SketchError> {
        w.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, SketchError> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SketchError> {
        if bytes.len() < PREFIX_BYTES {
            return Err(SketchError::Truncated(format!("{} bytes is shorter than the header", bytes.len())));
        }
        if &bytes[..4] != MAGIC {
            return Err(SketchError::Magic);
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != FORMAT_VERSION {
            return Err(SketchError::Version(version));
        }
        let payload_len = u64::from_le_bytes(bytes[6..14].try_into().unwrap());
        let expected = (PREFIX_BYTES as u64).checked_add(payload_len).and_then(|n| n.checked_add(4));
        match expected {
            Some(n) if n == bytes.len() as u64 => {}
            Some(n) if n > bytes.len() as u64 => {
                return Err(SketchError::Truncated(format!(
                    "header declares {n} bytes, file has {}",
                    bytes.len()
                )))
            }
            _ => {
                return Err(SketchError::Corrupt(format!(
                    "declared payload length {payload_len} does not match file size {}",
                    bytes.len()
                )))
            }
        }
        let body_end = bytes.len() - 4;
        let stored = u32::from_le_bytes(bytes[body_end..].try_into().unwrap());
        let computed = crc32fast::hash(&bytes[..body_end]);
        if stored != computed {
            return Err(SketchError::Checksum { stored, computed });
        }
        let mut cur = Cursor { buf: &bytes[PREFIX_BYTES..body_end], pos: 0 };
        let t = cur.u16()? as usize;
        let log2_counters = cur.u8()? as u32;
        let aux_universe = cur.u32()?;
        let levels = cur.u8()? as u32;
        let k = cur.u32()?;
        let canonical = match cur.u8()? {
            0 => false,
            1 => true,
            b => return Err(SketchError::Corrupt(format!("canonical flag {b}"))),
        };
        let seeds = (0..t).map(|_| cur.u64()).collect::<Result<Vec<_>, _>>()?;
        let params = SketchParams { log2_counters, aux_universe, levels, seeds };
        params.validate()?;
        let total_updates = cur.u64()?;
        let r = params.counters();
        let mut instances = Vec::with_capacity(t);
        for &seed in &params.seeds {
            let bitmap = cur.u64()?;
            if levels < 64 && bitmap >> levels != 0 {
                return Err(SketchError::Corrupt("level bitmap names a level beyond M".into()));
            }
            let mut slots = Vec::with_capacity(levels as usize);
            for idx in 0..levels as usize {
                if bitmap & (1 << idx) == 0 {
                    slots.push(None);
                    continue;
                }
                let mut values = Vec::with_capacity(r);
                let mut labels = Vec::with_capacity(r);
                for _ in 0..r {
                    let v = cur.u32()? as i32;
                    if v < super::DIRTY {
                        return Err(SketchError::Corrupt(format!("counter value {v}")));
                    }
                    values.push(v);
                    labels.push(cur.u16()?);
                }
                slots.push(Some(Level { values: values.into(), labels: labels.into() }));
            }
            instances.push(SketchInstance::from_levels(seed, r, slots));
        }
        if cur.pos != cur.buf.len() {
            return Err(SketchError::Corrupt(format!("{} trailing payload bytes", cur.buf.len() - cur.pos)));
        }
        Ok(AbundanceSketch::from_parts(params, KmerConfig { k, canonical }, instances, total_updates))
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], SketchError> {
        let end = self.pos + N;
        let slice = self
            .buf
            .get(self.pos..end)
            .ok_or_else(|| SketchError::Truncated(format!("payload ends at byte {}", self.buf.len())))?;
        self.pos = end;
        Ok(slice.try_into().unwrap())
    }
    fn u8(&mut self) -> Result<u8, SketchError> {
        Ok(self.take::<1>()?[0])
    }
    fn u16(&mut self) -> Result<u16, SketchError> {
        Ok(u16::from_le_bytes(self.take()?))
    }
    fn u32(&mut self) -> Result<u32, SketchError> {
        Ok(u32::from_le_bytes(self.take()?))
    }
    fn u64(&mut self) -> Result<u64, SketchError> {
        Ok(u64::from_le_bytes(self.take()?))
    }
}
