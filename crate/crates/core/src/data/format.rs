//! `MILB` bag files.
//!
//! Little-endian layout:
//!
//! ```text
//! magic "MILB" | version u32 | K u32 | M u32 | N u64
//! N times: id_len u16 | id utf-8 | T u32 | ceil(K/8) label bytes | T*M f32
//! ```
//!
//! Class `c` is bit `c % 8` of label byte `c / 8`. Padding bits must be zero.

use std::fs;
use std::path::Path;

use super::{default_class_names, Bag, BagDataset};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const MAGIC: &[u8; 4] = b"MILB";
pub const FORMAT_VERSION: u32 = 1;

/// Serialises a dataset. Features are narrowed to `f32`.
pub fn encode_bags(dataset: &BagDataset) -> Vec<u8> {
    let k = dataset.class_count();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(k as u32).to_le_bytes());
    out.extend_from_slice(&(dataset.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(dataset.len() as u64).to_le_bytes());
    for bag in dataset.bags() {
        let id = bag.id.as_bytes();
        out.extend_from_slice(&(id.len() as u16).to_le_bytes());
        out.extend_from_slice(id);
        out.extend_from_slice(&(bag.len() as u32).to_le_bytes());
        let mut mask = vec![0u8; k.div_ceil(8)];
        for (c, _) in bag.labels.iter().enumerate().filter(|(_, &l)| l) {
            mask[c / 8] |= 1 << (c % 8);
        }
        out.extend_from_slice(&mask);
        for &v in bag.instances.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                Error::format(
                    self.pos as u64,
                    format!("truncated while reading {what} ({n} bytes needed)"),
                )
            })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn offset(&self) -> u64 {
        self.pos as u64
    }
}

/// Parses a `MILB` byte buffer. Class names default to `class_<k>`.
pub fn decode_bags(bytes: &[u8]) -> Result<BagDataset> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::format(0, "bad magic, expected MILB"));
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let at = r.offset();
    let k = r.u32("class count")? as usize;
    if k == 0 {
        return Err(Error::format(at, "class count is zero"));
    }
    let at = r.offset();
    let m = r.u32("feature dimension")? as usize;
    if m == 0 {
        return Err(Error::format(at, "feature dimension is zero"));
    }
    let n = r.u64("bag count")?;
    let mask_len = k.div_ceil(8);

    let mut bags = Vec::new();
    for i in 0..n {
        let at = r.offset();
        let id_len = r.u16("bag id length")? as usize;
        let id = std::str::from_utf8(r.take(id_len, "bag id")?)
            .map_err(|_| Error::format(at + 2, format!("bag {i} id is not UTF-8")))?
            .to_string();

        let at = r.offset();
        let t = r.u32("instance count")? as usize;
        if t == 0 {
            return Err(Error::format(
                at,
                format!("bag {i} ({id:?}) has no instances"),
            ));
        }

        let at = r.offset();
        let mask = r.take(mask_len, "label bitmask")?;
        let labels: Vec<bool> = (0..k).map(|c| mask[c / 8] & (1 << (c % 8)) != 0).collect();
        if !k.is_multiple_of(8) && mask[mask_len - 1] >> (k % 8) != 0 {
            return Err(Error::format(
                at,
                format!("bag {i} label bitmask sets bits beyond {k} classes"),
            ));
        }
        if !labels.iter().any(|&l| l) {
            return Err(Error::format(at, format!("bag {i} ({id:?}) has no labels")));
        }

        let at = r.offset();
        let count = t
            .checked_mul(m)
            .and_then(|c| c.checked_mul(4))
            .ok_or_else(|| Error::format(at, "feature block size overflows"))?;
        let raw = r.take(count, "features")?;
        let data: Vec<f64> = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect();
        if let Some(j) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::format(
                at + 4 * j as u64,
                format!("bag {i} has a non-finite feature"),
            ));
        }
        let instances = Matrix::from_vec(t, m, data)?;
        bags.push(Bag {
            id,
            instances,
            labels,
        });
    }
    if r.pos != bytes.len() {
        return Err(Error::format(
            r.offset(),
            format!("{} trailing bytes after last bag", bytes.len() - r.pos),
        ));
    }
    BagDataset::new(default_class_names(k), m, bags)
}

pub fn write_bags(path: impl AsRef<Path>, dataset: &BagDataset) -> Result<()> {
    fs::write(path, encode_bags(dataset))?;
    Ok(())
}

pub fn read_bags(path: impl AsRef<Path>) -> Result<BagDataset> {
    decode_bags(&fs::read(path)?)
}
