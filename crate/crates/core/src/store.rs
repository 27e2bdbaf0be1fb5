//! Dense embedding tables backed by a flat `f32` matrix.
//!
//! On disk a table is a pair of files. The vector file (`.vecs`) is a
//! 32-byte header followed by row-major little-endian `f32` values:
//!
//! | bytes  | content                         |
//! |--------|---------------------------------|
//! | 0..4   | magic `SSWD`                    |
//! | 4..8   | format version, `u32` LE (= 1)  |
//! | 8..16  | row count, `u64` LE             |
//! | 16..20 | dim, `u32` LE                   |
//! | 20..32 | reserved, zero                  |
//!
//! The key file (`.keys`) is UTF-8 with one key per `\n`-terminated line;
//! line `i` names row `i`.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SSWD";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 32;

/// Borrowed view of one stored vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VectorRef<'a> {
    pub key: &'a str,
    pub values: &'a [f32],
}

/// Immutable keyed matrix of embeddings. Every row is finite with a
/// nonzero norm, so cosine similarity is total over stored rows.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    keys: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f32>,
}

impl EmbeddingTable {
    /// Builds a table, checking every invariant. Errors carry the row index.
    pub fn new(dim: usize, keys: Vec<String>, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Header("dim must be positive".into()));
        }
        if keys.is_empty() {
            return Err(Error::EmptyTable);
        }
        if data.len() != keys.len() * dim {
            return Err(Error::KeyCount {
                keys: keys.len(),
                rows: data.len() / dim,
            });
        }
        let mut index = HashMap::with_capacity(keys.len());
        for (row, key) in keys.iter().enumerate() {
            if key.is_empty() || key.contains('\n') {
                return Err(Error::Keys(format!("invalid key at row {row}: {key:?}")));
            }
            if index.insert(key.clone(), row).is_some() {
                return Err(Error::DuplicateKey {
                    key: key.clone(),
                    row,
                });
            }
        }
        for (row, values) in data.chunks_exact(dim).enumerate() {
            if let Some(col) = values.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { row, col });
            }
            let norm_sq: f64 = values.iter().map(|&v| f64::from(v) * f64::from(v)).sum();
            if norm_sq == 0.0 {
                return Err(Error::ZeroNorm { row });
            }
        }
        Ok(Self {
            dim,
            keys,
            index,
            data,
        })
    }

    /// Builds a table from `f64` rows, rounding each value to `f32`.
    pub fn from_rows<'a, I>(dim: usize, keys: Vec<String>, rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut data = Vec::with_capacity(keys.len() * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::Shape {
                    expected: dim,
                    actual: row.len(),
                });
            }
            data.extend(row.iter().map(|&v| v as f32));
        }
        Self::new(dim, keys, data)
    }

    pub fn load(vecs_path: impl AsRef<Path>, keys_path: impl AsRef<Path>) -> Result<Self> {
        let vecs_path = vecs_path.as_ref();
        let keys_path = keys_path.as_ref();
        let bytes = fs::read(vecs_path).map_err(|e| Error::io(vecs_path, e))?;
        let key_text = fs::read(keys_path).map_err(|e| Error::io(keys_path, e))?;
        let key_text = String::from_utf8(key_text)
            .map_err(|e| Error::Keys(format!("not valid UTF-8: {e}")))?;
        Self::decode(&bytes, &key_text)
    }

    /// Parses the in-memory contents of a vector file and a key file.
    pub fn decode(bytes: &[u8], key_text: &str) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Header(format!(
                "file is {} bytes, shorter than the {HEADER_LEN}-byte header",
                bytes.len()
            )));
        }
        if &bytes[0..4] != MAGIC {
            return Err(Error::Header("bad magic".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::Header(format!("unsupported version {version}")));
        }
        let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
        let dim = u32::from_le_bytes(bytes[16..20].try_into().unwrap());
        if bytes[20..HEADER_LEN].iter().any(|&b| b != 0) {
            return Err(Error::Header("reserved bytes are not zero".into()));
        }
        if rows == 0 {
            return Err(Error::EmptyTable);
        }
        if dim == 0 {
            return Err(Error::Header("dim must be positive".into()));
        }
        let payload = (bytes.len() - HEADER_LEN) as u64;
        let expected = rows
            .checked_mul(u64::from(dim))
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::Header("row count overflows".into()))?;
        if payload != expected {
            return Err(Error::DimMismatch {
                rows,
                dim,
                expected,
                actual: payload,
            });
        }

        let keys = parse_keys(key_text)?;
        if keys.len() as u64 != rows {
            return Err(Error::KeyCount {
                keys: keys.len(),
                rows: rows as usize,
            });
        }
        let data = bytes[HEADER_LEN..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(dim as usize, keys, data)
    }

    /// Serialises the table into `(vector file bytes, key file text)`.
    pub fn encode(&self) -> (Vec<u8>, String) {
        let mut bytes = Vec::with_capacity(Self::encoded_len(self.len() as u64, self.dim as u32) as usize);
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        bytes.extend_from_slice(&(self.len() as u64).to_le_bytes());
        bytes.extend_from_slice(&(self.dim as u32).to_le_bytes());
        bytes.extend_from_slice(&[0u8; HEADER_LEN - 20]);
        for v in &self.data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let mut keys = String::new();
        for k in &self.keys {
            keys.push_str(k);
            keys.push('\n');
        }
        (bytes, keys)
    }

    pub fn write(&self, vecs_path: impl AsRef<Path>, keys_path: impl AsRef<Path>) -> Result<()> {
        let (bytes, keys) = self.encode();
        let vecs_path = vecs_path.as_ref();
        let keys_path = keys_path.as_ref();
        fs::write(vecs_path, bytes).map_err(|e| Error::io(vecs_path, e))?;
        fs::write(keys_path, keys).map_err(|e| Error::io(keys_path, e))?;
        Ok(())
    }

    /// Size in bytes of a vector file holding `rows` rows of width `dim`.
    pub fn encoded_len(rows: u64, dim: u32) -> u64 {
        HEADER_LEN as u64 + rows * u64::from(dim) * 4
    }

    pub fn lookup(&self, key: &str) -> Result<VectorRef<'_>> {
        let row = self.row_of(key).ok_or_else(|| Error::UnknownKey(key.to_string()))?;
        Ok(VectorRef {
            key: &self.keys[row],
            values: self.row(row),
        })
    }

    pub fn row_of(&self, key: &str) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn row(&self, row: usize) -> &[f32] {
        &self.data[row * self.dim..(row + 1) * self.dim]
    }

    /// Row `row` widened to `f64`.
    pub fn row_f64(&self, row: usize) -> Vec<f64> {
        self.row(row).iter().map(|&v| f64::from(v)).collect()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keys(&self) -> &[String] {
        &self.keys
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }
}

fn parse_keys(text: &str) -> Result<Vec<String>> {
    let body = text.strip_suffix('\n').unwrap_or(text);
    if body.is_empty() {
        return Ok(Vec::new());
    }
    body.split('\n')
        .enumerate()
        .map(|(i, k)| {
            if k.is_empty() {
                Err(Error::Keys(format!("empty key on line {}", i + 1)))
            } else {
                Ok(k.to_string())
            }
        })
        .collect()
}
