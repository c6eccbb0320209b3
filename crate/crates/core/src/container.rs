//! Directory containers: a JSON manifest next to flat little-endian blobs,
//! with a SHA-256 over the blob bytes.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn f32_to_bytes(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn u32_to_bytes(values: &[u32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn bytes_to_f32(bytes: &[u8], what: &str) -> Result<Vec<f32>> {
    if !bytes.len().is_multiple_of(4) {
        return Err(Error::Corruption(format!(
            "{what}: {} bytes is not a whole number of float32 values",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn bytes_to_u32(bytes: &[u8], what: &str) -> Result<Vec<u32>> {
    if !bytes.len().is_multiple_of(4) {
        return Err(Error::Corruption(format!(
            "{what}: {} bytes is not a whole number of uint32 values",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// Hex SHA-256 over `(name, bytes)` pairs in the given order.
pub fn checksum<'a>(blobs: impl IntoIterator<Item = (&'a str, &'a [u8])>) -> String {
    let mut h = Sha256::new();
    for (name, bytes) in blobs {
        h.update((name.len() as u64).to_le_bytes());
        h.update(name.as_bytes());
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(bytes);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Format(format!("serializing {}: {e}", path.display())))?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read_file(path)?;
    serde_json::from_slice(&bytes)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// A row-major float32 matrix persisted as `manifest.json` + `data.f32`.
/// Used for per-video audio and video feature tables.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub kind: String,
    pub rows: usize,
    pub cols: usize,
    pub columns: Vec<String>,
    pub data: Vec<f32>,
    /// Per-row validity (video frames); `None` when every row is valid.
    pub valid: Option<Vec<bool>>,
    /// Free-form provenance (DSP settings, sample rate, source path).
    pub meta: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct FeatureTableManifest {
    format: String,
    version: u32,
    kind: String,
    rows: usize,
    cols: usize,
    columns: Vec<String>,
    has_valid: bool,
    meta: serde_json::Value,
    checksum: String,
}

const TABLE_FORMAT: &str = "exprfuse-features";

impl FeatureTable {
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn rows_vec(&self) -> Vec<Vec<f32>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::Shape(format!(
                "table holds {} values, expected {}x{}",
                self.data.len(),
                self.rows,
                self.cols
            )));
        }
        create_dir(dir)?;
        let data = f32_to_bytes(&self.data);
        let valid: Vec<u8> = self
            .valid
            .as_ref()
            .map(|v| v.iter().map(|&b| b as u8).collect())
            .unwrap_or_default();
        write_file(&dir.join("data.f32"), &data)?;
        if self.valid.is_some() {
            write_file(&dir.join("valid.u8"), &valid)?;
        }
        let manifest = FeatureTableManifest {
            format: TABLE_FORMAT.into(),
            version: 1,
            kind: self.kind.clone(),
            rows: self.rows,
            cols: self.cols,
            columns: self.columns.clone(),
            has_valid: self.valid.is_some(),
            meta: self.meta.clone(),
            checksum: checksum([("data", &data[..]), ("valid", &valid[..])]),
        };
        write_json(&dir.join(MANIFEST_FILE), &manifest)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let m: FeatureTableManifest = read_json(&dir.join(MANIFEST_FILE))?;
        if m.format != TABLE_FORMAT {
            return Err(Error::Format(format!(
                "{}: not a feature table (format '{}')",
                dir.display(),
                m.format
            )));
        }
        let data = read_file(&dir.join("data.f32"))?;
        let valid = if m.has_valid {
            read_file(&dir.join("valid.u8"))?
        } else {
            Vec::new()
        };
        if checksum([("data", &data[..]), ("valid", &valid[..])]) != m.checksum {
            return Err(Error::Corruption(format!(
                "{}: checksum mismatch",
                dir.display()
            )));
        }
        let data = bytes_to_f32(&data, "data.f32")?;
        if data.len() != m.rows * m.cols || (m.has_valid && valid.len() != m.rows) {
            return Err(Error::Schema(format!(
                "{}: manifest declares {}x{} but blobs disagree",
                dir.display(),
                m.rows,
                m.cols
            )));
        }
        Ok(Self {
            kind: m.kind,
            rows: m.rows,
            cols: m.cols,
            columns: m.columns,
            data,
            valid: m.has_valid.then(|| valid.iter().map(|&b| b != 0).collect()),
            meta: m.meta,
        })
    }
}
