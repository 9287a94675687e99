//! `MILM` model files.
//!
//! ```text
//! magic "MILM" | version u32 | spec_len u32 | spec JSON
//! parameters as f64, declaration order, row-major
//! bs_knn only: ref_len u64 | MILB bytes of the reference bags (empty if unset)
//! ```

use std::fs;
use std::path::Path;

use super::{layout, Head, Model, ModelSpec};
use crate::data::{decode_bags, default_class_names, encode_bags, BagDataset};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const MODEL_MAGIC: &[u8; 4] = b"MILM";
pub const MODEL_VERSION: u32 = 1;

pub fn encode_model(model: &Model) -> Vec<u8> {
    let spec = serde_json::to_vec(model.spec()).expect("spec always serialises");
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.extend_from_slice(&(spec.len() as u32).to_le_bytes());
    out.extend_from_slice(&spec);
    for p in model.params() {
        for v in p.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    if let Head::BsKnn { .. } = model.spec().head {
        let blob = model.reference().map_or_else(Vec::new, |bags| {
            let spec = model.spec();
            let ds = BagDataset::new(
                default_class_names(spec.classes),
                spec.input_dim,
                bags.to_vec(),
            )
            .expect("reference bags were validated when set");
            encode_bags(&ds)
        });
        out.extend_from_slice(&(blob.len() as u64).to_le_bytes());
        out.extend_from_slice(&blob);
    }
    out
}

fn take<'a>(bytes: &'a [u8], pos: &mut usize, n: usize, what: &str) -> Result<&'a [u8]> {
    let end = pos
        .checked_add(n)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| Error::format(*pos as u64, format!("truncated while reading {what}")))?;
    let out = &bytes[*pos..end];
    *pos = end;
    Ok(out)
}

pub fn decode_model(bytes: &[u8]) -> Result<Model> {
    let mut pos = 0;
    if take(bytes, &mut pos, 4, "magic")? != MODEL_MAGIC {
        return Err(Error::format(0, "bad magic, expected MILM"));
    }
    let version = u32::from_le_bytes(take(bytes, &mut pos, 4, "version")?.try_into().unwrap());
    if version != MODEL_VERSION {
        return Err(Error::Version {
            found: version,
            expected: MODEL_VERSION,
        });
    }
    let len = u32::from_le_bytes(take(bytes, &mut pos, 4, "spec length")?.try_into().unwrap());
    let at = pos as u64;
    let spec: ModelSpec = serde_json::from_slice(take(bytes, &mut pos, len as usize, "spec")?)
        .map_err(|e| Error::format(at, format!("model spec: {e}")))?;
    spec.validate()
        .map_err(|e| Error::format(at, format!("model spec: {e}")))?;

    let mut params = Vec::new();
    for def in layout(&spec) {
        let at = pos;
        let count = def
            .rows
            .checked_mul(def.cols)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| Error::format(at as u64, "parameter size overflows"))?;
        let raw = take(bytes, &mut pos, count, &format!("parameter {}", def.name))?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::format(
                at as u64,
                format!("parameter {} is not finite", def.name),
            ));
        }
        params.push(Matrix::from_vec(def.rows, def.cols, data)?);
    }
    let mut model = Model::from_parts(spec, params)?;

    if let Head::BsKnn { .. } = model.spec().head {
        let len = u64::from_le_bytes(
            take(bytes, &mut pos, 8, "reference length")?
                .try_into()
                .unwrap(),
        );
        let at = pos as u64;
        let len = usize::try_from(len).map_err(|_| Error::format(at, "reference too large"))?;
        let blob = take(bytes, &mut pos, len, "reference bags")?;
        if !blob.is_empty() {
            let reference = decode_bags(blob).map_err(|e| match e {
                Error::Format { offset, message } => Error::format(at + offset, message),
                other => other,
            })?;
            model
                .set_reference(&reference)
                .map_err(|e| Error::format(at, format!("reference bags: {e}")))?;
        }
    }
    if pos != bytes.len() {
        return Err(Error::format(
            pos as u64,
            format!("{} trailing bytes after model", bytes.len() - pos),
        ));
    }
    Ok(model)
}

pub fn save_model(path: impl AsRef<Path>, model: &Model) -> Result<()> {
    fs::write(path, encode_model(model))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    decode_model(&fs::read(path)?)
}
