//! Container for named `f32` arrays: a single-line JSON header followed by a
//! little-endian, row-major payload. Used for datasets and checkpoints.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub nbytes: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    schema_version: u32,
    kind: String,
    dtype: String,
    byte_order: String,
    arrays: Vec<ArrayEntry>,
    meta: Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorFile {
    pub kind: String,
    pub meta: Value,
    pub arrays: BTreeMap<String, (Vec<usize>, Vec<f32>)>,
}

impl TensorFile {
    pub fn new(kind: impl Into<String>, meta: Value) -> Self {
        Self {
            kind: kind.into(),
            meta,
            arrays: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f32>) {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.arrays.insert(name.into(), (shape, data));
    }

    pub fn take(&mut self, name: &str, path: &Path) -> Result<(Vec<usize>, Vec<f32>)> {
        self.arrays.remove(name).ok_or_else(|| Error::Corrupt {
            path: path.to_path_buf(),
            msg: format!("missing array `{name}`"),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut offset = 0;
        let arrays = self
            .arrays
            .iter()
            .map(|(name, (shape, data))| {
                let e = ArrayEntry {
                    name: name.clone(),
                    shape: shape.clone(),
                    offset,
                    nbytes: data.len() * 4,
                };
                offset += e.nbytes;
                e
            })
            .collect();
        let header = Header {
            schema_version: SCHEMA_VERSION,
            kind: self.kind.clone(),
            dtype: "f32".into(),
            byte_order: "little".into(),
            arrays,
            meta: self.meta.clone(),
        };
        let mut out = serde_json::to_vec(&header).expect("header serialises");
        out.push(b'\n');
        out.reserve(offset);
        for (_, data) in self.arrays.values() {
            for v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Parses a container; `path` is only used in error messages.
    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let corrupt = |msg: String| Error::Corrupt {
            path: path.to_path_buf(),
            msg,
        };
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| corrupt("no header terminator".into()))?;
        let raw: Value =
            serde_json::from_slice(&bytes[..nl]).map_err(|e| corrupt(format!("header is not JSON: {e}")))?;
        let unsupported = |msg: String| Error::Unsupported {
            path: path.to_path_buf(),
            msg,
        };
        match raw.get("schema_version").and_then(Value::as_u64) {
            None => return Err(unsupported("header has no schema_version".into())),
            Some(v) if v != SCHEMA_VERSION as u64 => {
                return Err(unsupported(format!("schema_version {v}, expected {SCHEMA_VERSION}")))
            }
            Some(_) => {}
        }
        let header: Header = serde_json::from_value(raw).map_err(|e| corrupt(format!("bad header: {e}")))?;
        if header.dtype != "f32" || header.byte_order != "little" {
            return Err(unsupported(format!("{} / {}", header.dtype, header.byte_order)));
        }
        let payload = &bytes[nl + 1..];
        let mut arrays = BTreeMap::new();
        for e in header.arrays {
            let expected = e.shape.iter().product::<usize>() * 4;
            if e.nbytes != expected {
                return Err(corrupt(format!(
                    "array `{}` declares {} bytes but shape {:?} needs {expected}",
                    e.name, e.nbytes, e.shape
                )));
            }
            let end = e.offset + e.nbytes;
            if end > payload.len() {
                return Err(corrupt(format!(
                    "array `{}` spans payload bytes {}..{end} but payload has {} bytes",
                    e.name,
                    e.offset,
                    payload.len()
                )));
            }
            let data = payload[e.offset..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            arrays.insert(e.name, (e.shape, data));
        }
        Ok(Self {
            kind: header.kind,
            meta: header.meta,
            arrays,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn sample() -> TensorFile {
        let mut f = TensorFile::new("test", json!({"a": 1}));
        f.insert("x", vec![2, 3], (0..6).map(|i| i as f32 * 0.5).collect());
        f.insert("y", vec![1], vec![-1.25]);
        f
    }

    #[test]
    fn round_trip() {
        let f = sample();
        let back = TensorFile::from_bytes(&f.to_bytes(), Path::new("mem")).unwrap();
        assert_eq!(back, f);
        assert_eq!(back.to_bytes(), f.to_bytes());
    }

    #[test]
    fn truncated_payload_is_corrupt() {
        let mut bytes = sample().to_bytes();
        bytes.truncate(bytes.len() - 3);
        let err = TensorFile::from_bytes(&bytes, Path::new("mem")).unwrap_err();
        assert!(matches!(err, Error::Corrupt { .. }), "{err}");
        assert!(err.to_string().contains("payload has"));
    }

    #[test]
    fn missing_version_is_unsupported() {
        let bytes = sample().to_bytes();
        let text = String::from_utf8_lossy(&bytes);
        let patched = text.replacen("\"schema_version\":1,", "", 1);
        let err = TensorFile::from_bytes(patched.as_bytes(), Path::new("mem")).unwrap_err();
        assert!(matches!(err, Error::Unsupported { .. }), "{err}");
    }
}
