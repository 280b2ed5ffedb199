//! Binary feature file: 8-byte magic `SLAF0001`, u32 LE row count, u32 LE
//! dimension, then `count * dim` little-endian binary32 values, row-major.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const FEATURE_MAGIC: &[u8; 8] = b"SLAF0001";
pub const FEATURE_HEADER_LEN: u64 = 16;

/// Row-major single-precision feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    count: usize,
    dim: usize,
    data: Vec<f32>,
}

impl FeatureMatrix {
    pub fn new(count: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Domain("feature dimension must be at least 1".into()));
        }
        if data.len() != count * dim {
            return Err(Error::Dimension {
                what: "feature data length",
                expected: count * dim,
                actual: data.len(),
            });
        }
        Ok(FeatureMatrix { count, dim, data })
    }

    /// Builds a matrix from rows, all of which must share one length.
    pub fn from_rows(dim: usize, rows: &[Vec<f32>]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::Dimension {
                    what: "feature row",
                    expected: dim,
                    actual: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        FeatureMatrix::new(rows.len(), dim, data)
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Row upcast to binary64, the precision all model math runs in.
    pub fn row_f64(&self, i: usize) -> Result<Vec<f64>> {
        if i >= self.count {
            return Err(Error::Domain(format!(
                "feature row {i} out of bounds ({} rows)",
                self.count
            )));
        }
        Ok(self.row(i).iter().map(|&v| v as f64).collect())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(FEATURE_HEADER_LEN as usize + 4 * self.data.len());
        out.extend_from_slice(FEATURE_MAGIC);
        out.extend_from_slice(&(self.count as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Decodes a feature file image. The declared size is checked against
    /// the buffer length before the value buffer is allocated.
    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let fail = |offset: u64, message: String| Error::Format {
            path: path.to_path_buf(),
            offset,
            message,
        };
        if bytes.len() < 8 || &bytes[..8] != FEATURE_MAGIC {
            return Err(fail(0, "bad magic, expected \"SLAF0001\"".into()));
        }
        if (bytes.len() as u64) < FEATURE_HEADER_LEN {
            return Err(fail(bytes.len() as u64, "truncated header".into()));
        }
        let count = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as u64;
        let dim = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as u64;
        if dim == 0 {
            return Err(fail(12, "dimension must be at least 1".into()));
        }
        let expected = FEATURE_HEADER_LEN as u128 + 4 * count as u128 * dim as u128;
        let actual = bytes.len() as u64;
        if actual as u128 != expected {
            let offset = (actual as u128).min(expected) as u64;
            let what = if (actual as u128) < expected { "truncated" } else { "trailing bytes in" };
            return Err(fail(
                offset,
                format!("{what} data: header declares {count}x{dim} ({expected} bytes), file has {actual}"),
            ));
        }
        let data = bytes[FEATURE_HEADER_LEN as usize..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        FeatureMatrix::new(count as usize, dim as usize, data)
    }
}

pub fn write_features(matrix: &FeatureMatrix, path: &Path) -> Result<()> {
    if matrix.count > u32::MAX as usize || matrix.dim > u32::MAX as usize {
        return Err(Error::Domain("feature matrix too large for u32 header".into()));
    }
    fs::write(path, matrix.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_features(path: &Path) -> Result<FeatureMatrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    FeatureMatrix::from_bytes(&bytes, path)
}
