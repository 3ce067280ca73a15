//! Tensor archive: the on-disk container for checkpoints and pretrained
//! weights.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! [u64: header length N] [N bytes: JSON header] [payload bytes]
//! ```
//!
//! The JSON header maps tensor names to `{dtype, shape, data_offsets}`
//! records (offsets are relative to the payload start) and carries a
//! `__metadata__` string map for run state. Keys are written in sorted order
//! and the header is padded with spaces to an 8-byte boundary, so a given
//! archive serializes to identical bytes every time.
//!
//! The metadata always includes `payload_sha256`; reads verify it, so a
//! truncated or corrupted file fails loudly instead of yielding garbage
//! weights.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hash::hash_bytes;
use crate::tensor::Tensor;

pub const FORMAT_VERSION: &str = "1";

const DTYPE: &str = "F64";

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    dtype: String,
    shape: Vec<usize>,
    data_offsets: [usize; 2],
}

/// In-memory form of an archive: named tensors plus string metadata.
#[derive(Default)]
pub struct Archive {
    pub tensors: BTreeMap<String, Tensor>,
    pub metadata: BTreeMap<String, String>,
}

impl Archive {
    pub fn new() -> Self {
        Archive::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.tensors.insert(name.into(), tensor);
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::Archive(format!("archive is missing tensor `{}`", name)))
    }

    pub fn meta(&self, key: &str) -> Result<&str> {
        self.metadata
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Archive(format!("archive is missing metadata `{}`", key)))
    }

    /// Serialize to bytes. Deterministic for identical contents.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut payload = Vec::new();
        let mut records: BTreeMap<&str, TensorRecord> = BTreeMap::new();
        for (name, t) in &self.tensors {
            let start = payload.len();
            for v in t.data() {
                payload.extend_from_slice(&v.to_le_bytes());
            }
            records.insert(
                name,
                TensorRecord {
                    dtype: DTYPE.into(),
                    shape: t.shape().to_vec(),
                    data_offsets: [start, payload.len()],
                },
            );
        }

        let mut metadata = self.metadata.clone();
        metadata.insert("format_version".into(), FORMAT_VERSION.into());
        metadata.insert("payload_sha256".into(), hash_bytes(&payload));

        // Build the header object with __metadata__ alongside tensor records.
        let mut header = serde_json::Map::new();
        header.insert(
            "__metadata__".into(),
            serde_json::to_value(&metadata).expect("string map serializes"),
        );
        for (name, rec) in &records {
            header.insert(
                (*name).to_string(),
                serde_json::to_value(rec).expect("tensor record serializes"),
            );
        }
        let mut header_bytes = serde_json::to_vec(&serde_json::Value::Object(header))
            .expect("header serializes");
        while (8 + header_bytes.len()) % 8 != 0 {
            header_bytes.push(b' ');
        }

        let mut out = Vec::with_capacity(8 + header_bytes.len() + payload.len());
        out.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
        out.extend_from_slice(&header_bytes);
        out.extend_from_slice(&payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Archive> {
        if bytes.len() < 8 {
            return Err(Error::Archive("file too short for a header".into()));
        }
        let header_len = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
        let payload_start = 8 + header_len;
        if bytes.len() < payload_start {
            return Err(Error::Archive(format!(
                "declared header length {} exceeds file size {}",
                header_len,
                bytes.len()
            )));
        }
        let header: serde_json::Map<String, serde_json::Value> =
            serde_json::from_slice(&bytes[8..payload_start])
                .map_err(|e| Error::Archive(format!("malformed header JSON: {}", e)))?;
        let payload = &bytes[payload_start..];

        let mut metadata: BTreeMap<String, String> = match header.get("__metadata__") {
            Some(v) => serde_json::from_value(v.clone())
                .map_err(|e| Error::Archive(format!("malformed __metadata__: {}", e)))?,
            None => return Err(Error::Archive("archive has no __metadata__".into())),
        };
        let version = metadata
            .get("format_version")
            .ok_or_else(|| Error::Archive("archive does not declare a format version".into()))?;
        if version != FORMAT_VERSION {
            return Err(Error::Incompatible(format!(
                "archive format version {} (supported: {})",
                version, FORMAT_VERSION
            )));
        }
        let expected = metadata
            .get("payload_sha256")
            .ok_or_else(|| Error::Archive("archive carries no payload checksum".into()))?;
        let actual = hash_bytes(payload);
        if &actual != expected {
            return Err(Error::Archive(format!(
                "payload checksum mismatch: expected {}, found {}",
                expected, actual
            )));
        }
        metadata.remove("payload_sha256");
        metadata.remove("format_version");

        let mut tensors = BTreeMap::new();
        for (name, value) in header {
            if name == "__metadata__" {
                continue;
            }
            let rec: TensorRecord = serde_json::from_value(value)
                .map_err(|e| Error::Archive(format!("malformed record for `{}`: {}", name, e)))?;
            if rec.dtype != DTYPE {
                return Err(Error::Incompatible(format!(
                    "tensor `{}` has dtype {} (only {} is supported)",
                    name, rec.dtype, DTYPE
                )));
            }
            let [start, end] = rec.data_offsets;
            let n_elems: usize = rec.shape.iter().product();
            if end < start || end > payload.len() || end - start != n_elems * 8 {
                return Err(Error::Archive(format!(
                    "tensor `{}` offsets [{}, {}) disagree with shape {:?}",
                    name, start, end, rec.shape
                )));
            }
            let data: Vec<f64> = payload[start..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.insert(name, Tensor::new(&rec.shape, data));
        }
        Ok(Archive { tensors, metadata })
    }

    /// Write atomically: serialize to a temp file in the target directory,
    /// then rename over the destination.
    pub fn write(&self, path: &Path) -> Result<()> {
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
        let mut tmp = match dir {
            Some(d) => tempfile::NamedTempFile::new_in(d),
            None => tempfile::NamedTempFile::new(),
        }
        .map_err(|e| Error::io(path, e))?;
        tmp.write_all(&self.to_bytes())
            .map_err(|e| Error::io(path, e))?;
        tmp.persist(path)
            .map_err(|e| Error::io(path, e.error))?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Archive> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Archive::from_bytes(&bytes)
            .map_err(|e| Error::Archive(format!("{}: {}", path.display(), e)))
    }
}
