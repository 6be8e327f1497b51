//! Parameter checkpoints: a binary blob plus a JSON manifest.
//!
//! Blob layout, repeated once per tensor in manifest order:
//! `u64 rank | u64 dim * rank | f64 value * numel`, all little-endian.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

pub const FORMAT: &str = "f64le-shape-prefixed-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset of this tensor's rank field in the blob.
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorManifest {
    pub format: String,
    pub blob: String,
    pub tensors: Vec<TensorRecord>,
    /// Caller-defined metadata (model configuration and the like).
    pub meta: serde_json::Value,
}

fn paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("bin"), stem.with_extension("json"))
}

/// Write `<stem>.bin` and `<stem>.json`.
pub fn write_tensors(stem: &Path, tensors: &[(String, &Tensor)], meta: serde_json::Value) -> Result<()> {
    let (bin_path, json_path) = paths(stem);
    let mut blob = Vec::new();
    let mut records = Vec::with_capacity(tensors.len());
    for (name, t) in tensors {
        records.push(TensorRecord {
            name: name.clone(),
            shape: t.shape().to_vec(),
            offset: blob.len() as u64,
        });
        blob.extend_from_slice(&(t.shape().len() as u64).to_le_bytes());
        for &d in t.shape() {
            blob.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &x in t.data() {
            blob.extend_from_slice(&x.to_le_bytes());
        }
    }
    let manifest = TensorManifest {
        format: FORMAT.to_string(),
        blob: bin_path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        tensors: records,
        meta,
    };
    if let Some(dir) = bin_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(&bin_path, blob).map_err(|e| Error::io(&bin_path, e))?;
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(&json_path, text + "\n").map_err(|e| Error::io(&json_path, e))?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Cursor<'_> {
    fn take8(&mut self) -> Result<[u8; 8]> {
        let end = self.pos + 8;
        let bytes = self.buf.get(self.pos..end).ok_or_else(|| {
            Error::Contract(format!("{}: blob truncated at byte {}", self.path.display(), self.pos))
        })?;
        self.pos = end;
        Ok(bytes.try_into().expect("8 bytes"))
    }
}

/// Read a checkpoint written by [`write_tensors`]. Shapes in the blob must
/// agree with the manifest.
pub fn read_tensors(stem: &Path) -> Result<(TensorManifest, Vec<(String, Tensor)>)> {
    let (bin_path, json_path) = paths(stem);
    let text = fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
    let manifest: TensorManifest = serde_json::from_str(&text)?;
    if manifest.format != FORMAT {
        return Err(Error::Contract(format!(
            "{}: unknown checkpoint format {:?}",
            json_path.display(),
            manifest.format
        )));
    }
    let blob = fs::read(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
    let mut out = Vec::with_capacity(manifest.tensors.len());
    for rec in &manifest.tensors {
        let mut cur = Cursor {
            buf: &blob,
            pos: rec.offset as usize,
            path: &bin_path,
        };
        let rank = u64::from_le_bytes(cur.take8()?) as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(u64::from_le_bytes(cur.take8()?) as usize);
        }
        if shape != rec.shape {
            return Err(Error::Dimension(format!(
                "{}: tensor {} has shape {:?} in blob, {:?} in manifest",
                bin_path.display(),
                rec.name,
                shape,
                rec.shape
            )));
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        for _ in 0..numel {
            data.push(f64::from_le_bytes(cur.take8()?));
        }
        out.push((rec.name.clone(), Tensor::new(shape, data)?));
    }
    Ok((manifest, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let a = Tensor::from_rows(&[vec![1.0, -0.0], vec![f64::MIN_POSITIVE, 1e300]]);
        let b = Tensor::scalar(std::f64::consts::PI);
        let stem = dir.path().join("ckpt");
        write_tensors(
            &stem,
            &[("a".into(), &a), ("b".into(), &b)],
            serde_json::json!({"k": 2}),
        )
        .unwrap();
        let (manifest, back) = read_tensors(&stem).unwrap();
        assert_eq!(manifest.meta["k"], 2);
        assert_eq!(back[0].1, a);
        assert_eq!(back[1].1.data()[0].to_bits(), b.data()[0].to_bits());
        assert_eq!(back[0].1.data()[1].to_bits(), (-0.0f64).to_bits());
    }

    #[test]
    fn truncated_blob_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("c");
        let a = Tensor::zeros(&[4, 4]);
        write_tensors(&stem, &[("a".into(), &a)], serde_json::Value::Null).unwrap();
        let bin = stem.with_extension("bin");
        let bytes = fs::read(&bin).unwrap();
        fs::write(&bin, &bytes[..bytes.len() - 8]).unwrap();
        assert!(read_tensors(&stem).is_err());
    }
}
