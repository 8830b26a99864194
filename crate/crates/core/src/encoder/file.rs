//! The binary embedding file and the exact-text lookup encoder built on it.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! header:  magic "FAQEMB01" (8 bytes) | version u32 | dim u32 | count u64
//! record:  id u64 | text_len u32 | text (UTF-8, text_len bytes) | dim x f32
//! ```

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{BaseEncoder, EncoderError};

pub const EMBEDDING_MAGIC: &[u8; 8] = b"FAQEMB01";
const FORMAT_VERSION: u32 = 1;

/// One record of an embedding file.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub id: u64,
    pub text: String,
    pub vector: Vec<f32>,
}

/// Byte cursor producing offset-tagged parse errors.
pub(super) struct Cursor<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    pub(super) fn new(path: &'a Path, bytes: &'a [u8]) -> Self {
        Self { path, bytes, pos: 0 }
    }

    pub(super) fn corrupt(&self, offset: usize, reason: &str) -> EncoderError {
        EncoderError::Corrupt {
            path: PathBuf::from(self.path),
            offset: offset as u64,
            reason: reason.to_string(),
        }
    }

    pub(super) fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], EncoderError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(self.corrupt(self.pos, &format!("truncated {what}"))),
        }
    }

    pub(super) fn u32(&mut self, what: &str) -> Result<u32, EncoderError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub(super) fn u64(&mut self, what: &str) -> Result<u64, EncoderError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    pub(super) fn string(&mut self, what: &str) -> Result<String, EncoderError> {
        let len = self.u32(what)? as usize;
        let start = self.pos;
        let raw = self.take(len, what)?;
        std::str::from_utf8(raw)
            .map(str::to_string)
            .map_err(|_| self.corrupt(start, &format!("{what} is not valid UTF-8")))
    }

    pub(super) fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>, EncoderError> {
        let raw = self.take(n * 4, what)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub(super) fn expect_end(&self) -> Result<(), EncoderError> {
        if self.pos == self.bytes.len() {
            Ok(())
        } else {
            Err(self.corrupt(self.pos, "trailing bytes"))
        }
    }
}

pub fn write_embedding_file(
    path: &Path,
    dim: usize,
    records: &[EmbeddingRecord],
) -> Result<(), EncoderError> {
    if dim == 0 {
        return Err(EncoderError::ZeroDimension);
    }
    let io = |source| EncoderError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    let mut header = Vec::with_capacity(24);
    header.extend_from_slice(EMBEDDING_MAGIC);
    header.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    header.extend_from_slice(&(dim as u32).to_le_bytes());
    header.extend_from_slice(&(records.len() as u64).to_le_bytes());
    out.write_all(&header).map_err(io)?;
    for r in records {
        if r.vector.len() != dim {
            return Err(EncoderError::DimensionMismatch {
                expected: dim,
                actual: r.vector.len(),
            });
        }
        out.write_all(&r.id.to_le_bytes()).map_err(io)?;
        out.write_all(&(r.text.len() as u32).to_le_bytes()).map_err(io)?;
        out.write_all(r.text.as_bytes()).map_err(io)?;
        for x in &r.vector {
            out.write_all(&x.to_le_bytes()).map_err(io)?;
        }
    }
    out.flush().map_err(io)
}

/// Parse an embedding file into its records.
pub fn read_embedding_records(path: &Path) -> Result<(usize, Vec<EmbeddingRecord>), EncoderError> {
    let bytes = std::fs::read(path).map_err(|source| EncoderError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut cur = Cursor::new(path, &bytes);
    if cur.take(8, "magic")? != EMBEDDING_MAGIC {
        return Err(cur.corrupt(0, "bad magic"));
    }
    let version = cur.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(cur.corrupt(8, &format!("unsupported version {version}")));
    }
    let dim = cur.u32("dimension")? as usize;
    if dim == 0 {
        return Err(cur.corrupt(12, "dimension is zero"));
    }
    let count = cur.u64("record count")?;
    let mut records = Vec::with_capacity(count.min(1 << 20) as usize);
    for _ in 0..count {
        let id = cur.u64("record id")?;
        let text = cur.string("record text")?;
        let vector = cur.f32s(dim, "record vector")?;
        records.push(EmbeddingRecord { id, text, vector });
    }
    cur.expect_end()?;
    Ok((dim, records))
}

/// A base encoder answering from a precomputed table, keyed by the exact
/// UTF-8 text.
#[derive(Debug)]
pub struct LookupProvider {
    dim: usize,
    rows: HashMap<String, usize>,
    values: Vec<f32>,
}

impl LookupProvider {
    pub fn from_records(dim: usize, records: Vec<EmbeddingRecord>) -> Result<Self, EncoderError> {
        if dim == 0 {
            return Err(EncoderError::ZeroDimension);
        }
        let mut rows = HashMap::with_capacity(records.len());
        let mut values = Vec::with_capacity(records.len() * dim);
        for r in records {
            if r.vector.len() != dim {
                return Err(EncoderError::DimensionMismatch {
                    expected: dim,
                    actual: r.vector.len(),
                });
            }
            if rows.contains_key(&r.text) {
                continue;
            }
            rows.insert(r.text, values.len() / dim);
            values.extend_from_slice(&r.vector);
        }
        Ok(Self { dim, rows, values })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn contains(&self, text: &str) -> bool {
        self.rows.contains_key(text)
    }
}

impl BaseEncoder for LookupProvider {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, EncoderError> {
        let row = *self
            .rows
            .get(text)
            .ok_or_else(|| EncoderError::LookupMiss(text.to_string()))?;
        Ok(self.values[row * self.dim..(row + 1) * self.dim].to_vec())
    }

    fn resident_bytes(&self) -> usize {
        self.values.len() * 4 + self.rows.keys().map(|k| k.len()).sum::<usize>()
    }
}

pub fn load_embedding_file(path: impl AsRef<Path>) -> Result<LookupProvider, EncoderError> {
    let (dim, records) = read_embedding_records(path.as_ref())?;
    LookupProvider::from_records(dim, records)
}
