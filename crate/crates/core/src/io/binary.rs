//! Little-endian fixed-layout files for features (`SIMF`), labels (`SIML`)
//! and multi-view logits (`SIMG`).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::write_atomic;

pub const MATRIX_MAGIC: &[u8; 4] = b"SIMF";
pub const LABEL_MAGIC: &[u8; 4] = b"SIML";
pub const LOGITS_MAGIC: &[u8; 4] = b"SIMG";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dtype {
    F32,
    #[default]
    F64,
}

impl Dtype {
    fn code(self) -> u8 {
        match self {
            Dtype::F32 => 1,
            Dtype::F64 => 2,
        }
    }

    fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixFile {
    pub rows: usize,
    pub cols: usize,
    pub dtype: Dtype,
    /// Row-major values; `F32` payloads are widened losslessly.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogitsFile {
    pub plans: usize,
    pub samples: usize,
    pub classes: usize,
    pub dtype: Dtype,
    /// `[k][n][c]` row-major.
    pub values: Vec<f64>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn fail<T>(&self, offset: usize, message: impl Into<String>) -> Result<T> {
        Err(Error::Format {
            path: self.path.to_path_buf(),
            offset: offset as u64,
            message: message.into(),
        })
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return self.fail(
                self.pos,
                format!("expected {n} bytes of {what}, found {}", self.bytes.len() - self.pos),
            );
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        let got = self.take(4, "magic")?;
        if got != magic {
            return self.fail(0, format!("expected magic {:?}, found {:?}", as_text(magic), as_text(got)));
        }
        Ok(())
    }

    fn byte(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn version(&mut self) -> Result<()> {
        let at = self.pos;
        let v = self.byte("version")?;
        if v != VERSION {
            return self.fail(at, format!("expected version {VERSION}, found {v}"));
        }
        Ok(())
    }

    fn dtype(&mut self) -> Result<Dtype> {
        let at = self.pos;
        match self.byte("dtype")? {
            1 => Ok(Dtype::F32),
            2 => Ok(Dtype::F64),
            d => self.fail(at, format!("expected dtype 1 (f32) or 2 (f64), found {d}")),
        }
    }

    fn zeros(&mut self, n: usize) -> Result<()> {
        let at = self.pos;
        if self.take(n, "reserved bytes")?.iter().any(|&b| b != 0) {
            return self.fail(at, "expected zero reserved bytes");
        }
        Ok(())
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn count(&mut self, what: &str) -> Result<usize> {
        let at = self.pos;
        let v = self.u64(what)?;
        usize::try_from(v).or_else(|_| self.fail(at, format!("{what} {v} does not fit in memory")))
    }

    fn floats(&mut self, count: usize, dtype: Dtype) -> Result<Vec<f64>> {
        let at = self.pos;
        let Some(len) = count.checked_mul(dtype.width()) else {
            return self.fail(at, "payload size overflows");
        };
        let remaining = self.bytes.len() - self.pos;
        if remaining != len {
            return self.fail(at, format!("expected {len} payload bytes, found {remaining}"));
        }
        let payload = self.take(len, "payload")?;
        Ok(match dtype {
            Dtype::F32 => payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
                .collect(),
            Dtype::F64 => payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect(),
        })
    }
}

fn as_text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

fn dims_product(dims: &[usize]) -> Option<usize> {
    dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d))
}

fn push_floats(out: &mut Vec<u8>, values: &[f64], dtype: Dtype) {
    for &v in values {
        match dtype {
            Dtype::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
            Dtype::F64 => out.extend_from_slice(&v.to_le_bytes()),
        }
    }
}

fn shape_error(expected: usize, got: usize) -> Error {
    Error::Shape(format!("header describes {expected} values, got {got}"))
}

impl MatrixFile {
    pub fn new(rows: usize, cols: usize, dtype: Dtype, values: Vec<f64>) -> Result<Self> {
        if rows * cols != values.len() {
            return Err(shape_error(rows * cols, values.len()));
        }
        Ok(Self { rows, cols, dtype, values })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(24 + self.values.len() * self.dtype.width());
        out.extend_from_slice(MATRIX_MAGIC);
        out.extend_from_slice(&[VERSION, self.dtype.code(), 0, 0]);
        out.extend_from_slice(&(self.rows as u64).to_le_bytes());
        out.extend_from_slice(&(self.cols as u64).to_le_bytes());
        push_floats(&mut out, &self.values, self.dtype);
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0, path };
        r.magic(MATRIX_MAGIC)?;
        r.version()?;
        let dtype = r.dtype()?;
        r.zeros(2)?;
        let rows = r.count("row count")?;
        let cols = r.count("column count")?;
        let count = dims_product(&[rows, cols]);
        let values = match count {
            Some(n) => r.floats(n, dtype)?,
            None => return r.fail(16, "rows x cols overflows"),
        };
        Ok(Self { rows, cols, dtype, values })
    }
}

pub fn labels_to_bytes(labels: &[u32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(15 + 4 * labels.len());
    out.extend_from_slice(LABEL_MAGIC);
    out.extend_from_slice(&[VERSION, 0, 0]);
    out.extend_from_slice(&(labels.len() as u64).to_le_bytes());
    for l in labels {
        out.extend_from_slice(&l.to_le_bytes());
    }
    out
}

pub fn labels_from_bytes(bytes: &[u8], path: &Path) -> Result<Vec<u32>> {
    let mut r = Reader { bytes, pos: 0, path };
    r.magic(LABEL_MAGIC)?;
    r.version()?;
    r.zeros(2)?;
    let count = r.count("label count")?;
    let at = r.pos;
    let remaining = bytes.len() - at;
    if count.checked_mul(4) != Some(remaining) {
        return r.fail(at, format!("expected {} payload bytes, found {remaining}", count.saturating_mul(4)));
    }
    Ok(r.take(remaining, "payload")?
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect())
}

impl LogitsFile {
    pub fn new(plans: usize, samples: usize, classes: usize, dtype: Dtype, values: Vec<f64>) -> Result<Self> {
        if plans * samples * classes != values.len() {
            return Err(shape_error(plans * samples * classes, values.len()));
        }
        Ok(Self { plans, samples, classes, dtype, values })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(31 + self.values.len() * self.dtype.width());
        out.extend_from_slice(LOGITS_MAGIC);
        out.extend_from_slice(&[VERSION, self.dtype.code(), 0]);
        for d in [self.plans, self.samples, self.classes] {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        push_floats(&mut out, &self.values, self.dtype);
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0, path };
        r.magic(LOGITS_MAGIC)?;
        r.version()?;
        let dtype = r.dtype()?;
        r.zeros(1)?;
        let plans = r.count("plan count")?;
        let samples = r.count("sample count")?;
        let classes = r.count("class count")?;
        let values = match dims_product(&[plans, samples, classes]) {
            Some(n) => r.floats(n, dtype)?,
            None => return r.fail(7, "K x N x C overflows"),
        };
        Ok(Self { plans, samples, classes, dtype, values })
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn read_matrix(path: &Path) -> Result<MatrixFile> {
    MatrixFile::from_bytes(&read(path)?, path)
}

pub fn write_matrix(path: &Path, m: &MatrixFile) -> Result<()> {
    write_atomic(path, &m.to_bytes())
}

pub fn read_labels(path: &Path) -> Result<Vec<u32>> {
    labels_from_bytes(&read(path)?, path)
}

pub fn write_labels(path: &Path, labels: &[u32]) -> Result<()> {
    write_atomic(path, &labels_to_bytes(labels))
}

pub fn read_logits(path: &Path) -> Result<LogitsFile> {
    LogitsFile::from_bytes(&read(path)?, path)
}

pub fn write_logits(path: &Path, l: &LogitsFile) -> Result<()> {
    write_atomic(path, &l.to_bytes())
}
