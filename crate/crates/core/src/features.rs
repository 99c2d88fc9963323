//! The FFB1 embedding file format.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! b"FFB1" | u32 n | u32 d | n x (u32 len, len bytes UTF-8 id) | n*d f32 row-major
//! ```

use std::collections::HashSet;
use std::path::Path;

use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"FFB1";

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic {0:?}, expected \"FFB1\"")]
    BadMagic([u8; 4]),
    #[error("truncated file: {0}")]
    TruncatedFile(String),
    #[error("invalid feature matrix: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub d: usize,
    pub ids: Vec<String>,
    /// Row-major, `ids.len() * d` values.
    pub data: Vec<f32>,
}

impl FeatureMatrix {
    pub fn new(ids: Vec<String>, d: usize, data: Vec<f32>) -> Result<Self, FeatureError> {
        let fm = Self { d, ids, data };
        fm.check()?;
        Ok(fm)
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn check(&self) -> Result<(), FeatureError> {
        if self.data.len() != self.ids.len() * self.d {
            return Err(FeatureError::Invalid(format!(
                "{} values for {} rows of width {}",
                self.data.len(),
                self.ids.len(),
                self.d
            )));
        }
        let mut seen = HashSet::with_capacity(self.ids.len());
        for id in &self.ids {
            if !seen.insert(id.as_str()) {
                return Err(FeatureError::Invalid(format!("duplicate id `{id}`")));
            }
        }
        if let Some(pos) = self.data.iter().position(|v| !v.is_finite()) {
            return Err(FeatureError::Invalid(format!(
                "non-finite value at row {}, column {}",
                pos / self.d.max(1),
                pos % self.d.max(1)
            )));
        }
        Ok(())
    }

    /// Row index by sample id.
    pub fn index(&self) -> std::collections::HashMap<&str, usize> {
        self.ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect()
    }

    /// Rows for `ids` in that order, upcast to f64.
    pub fn gather(&self, ids: &[&str]) -> Result<Vec<Vec<f64>>, FeatureError> {
        let index = self.index();
        ids.iter()
            .map(|id| {
                index
                    .get(id)
                    .map(|&i| self.row(i).iter().map(|&v| v as f64).collect())
                    .ok_or_else(|| FeatureError::Invalid(format!("no features for `{id}`")))
            })
            .collect()
    }
}

pub fn encode_features(fm: &FeatureMatrix) -> Result<Vec<u8>, FeatureError> {
    fm.check()?;
    let n = u32::try_from(fm.n()).map_err(|_| FeatureError::Invalid("n exceeds u32".into()))?;
    let d = u32::try_from(fm.d).map_err(|_| FeatureError::Invalid("d exceeds u32".into()))?;
    let id_bytes: usize = fm.ids.iter().map(|s| 4 + s.len()).sum();
    let mut out = Vec::with_capacity(12 + id_bytes + 4 * fm.data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&n.to_le_bytes());
    out.extend_from_slice(&d.to_le_bytes());
    for id in &fm.ids {
        out.extend_from_slice(&(id.len() as u32).to_le_bytes());
        out.extend_from_slice(id.as_bytes());
    }
    for v in &fm.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_features(bytes: &[u8]) -> Result<FeatureMatrix, FeatureError> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic: [u8; 4] = cur.take(4, "magic")?.try_into().unwrap();
    if &magic != MAGIC {
        return Err(FeatureError::BadMagic(magic));
    }
    let n = cur.u32("n")? as usize;
    let d = cur.u32("d")? as usize;
    let mut ids = Vec::with_capacity(n.min(1 << 20));
    for i in 0..n {
        let len = cur.u32("id length")? as usize;
        let raw = cur.take(len, "id")?;
        let id = std::str::from_utf8(raw)
            .map_err(|_| FeatureError::Invalid(format!("id {i} is not UTF-8")))?;
        ids.push(id.to_string());
    }
    let count = n
        .checked_mul(d)
        .ok_or_else(|| FeatureError::Invalid("n*d overflows".into()))?;
    let raw = cur.take(
        count
            .checked_mul(4)
            .ok_or_else(|| FeatureError::Invalid("n*d overflows".into()))?,
        "matrix data",
    )?;
    let data = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if cur.pos != bytes.len() {
        return Err(FeatureError::Invalid(format!(
            "{} trailing bytes",
            bytes.len() - cur.pos
        )));
    }
    FeatureMatrix::new(ids, d, data)
}

pub fn write_features(fm: &FeatureMatrix, path: impl AsRef<Path>) -> Result<(), FeatureError> {
    let bytes = encode_features(fm)?;
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn read_features(path: impl AsRef<Path>) -> Result<FeatureMatrix, FeatureError> {
    decode_features(&std::fs::read(path)?)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8], FeatureError> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(FeatureError::TruncatedFile(format!(
                "{what}: need {len} bytes at offset {}, file has {}",
                self.pos,
                self.bytes.len()
            ))),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32, FeatureError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}
