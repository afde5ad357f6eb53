//! Parameter serialization: a text manifest with one `name shape offset`
//! line per parameter, and a blob of little-endian f64 values in manifest
//! order. `offset` is the byte position of the first value in the blob.
//! Manifest lines starting with `#` are headers and are skipped here.

use std::io::Write;

use crate::error::{NeuralError, Result};
use crate::param::ParamStore;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

pub fn write_manifest(out: &mut impl Write, store: &ParamStore) -> Result<()> {
    let mut offset = 0;
    for p in store.iter() {
        writeln!(out, "{} {} {}", p.name, p.value.shape_string(), offset)?;
        offset += p.value.len() * 8;
    }
    Ok(())
}

pub fn write_blob(out: &mut impl Write, store: &ParamStore) -> Result<()> {
    for p in store.iter() {
        for v in p.value.data() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_manifest(text: &str) -> Result<Vec<ManifestEntry>> {
    let mut entries = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad =
            || NeuralError::Checkpoint(format!("malformed manifest line {}: {line:?}", lineno + 1));
        let mut fields = line.split_whitespace();
        let (Some(name), Some(shape), Some(offset), None) =
            (fields.next(), fields.next(), fields.next(), fields.next())
        else {
            return Err(bad());
        };
        let shape = Tensor::parse_shape(shape).ok_or_else(bad)?;
        let offset = offset.parse().map_err(|_| bad())?;
        entries.push(ManifestEntry {
            name: name.to_string(),
            shape,
            offset,
        });
    }
    Ok(entries)
}

pub fn read_blob(blob: &[u8], entries: &[ManifestEntry]) -> Result<Vec<(String, Tensor)>> {
    let mut expected_offset = 0;
    let mut out = Vec::with_capacity(entries.len());
    for e in entries {
        if e.offset != expected_offset {
            return Err(NeuralError::Checkpoint(format!(
                "parameter {} starts at byte {}, expected {}",
                e.name, e.offset, expected_offset
            )));
        }
        let len: usize = e.shape.iter().product();
        let end = e.offset + len * 8;
        if end > blob.len() {
            return Err(NeuralError::Checkpoint(format!(
                "blob truncated inside parameter {}",
                e.name
            )));
        }
        let data = blob[e.offset..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        out.push((e.name.clone(), Tensor::new(e.shape.clone(), data)?));
        expected_offset = end;
    }
    if expected_offset != blob.len() {
        return Err(NeuralError::Checkpoint(format!(
            "blob has {} trailing bytes",
            blob.len() - expected_offset
        )));
    }
    Ok(out)
}
