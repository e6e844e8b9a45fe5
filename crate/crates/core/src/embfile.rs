//! Binary embedding file shared with the extractor.
//!
//! Little-endian layout:
//!
//! | field        | type            |
//! |--------------|-----------------|
//! | magic        | `b"BPEREMB1"`   |
//! | count        | `u32`           |
//! | dim          | `u32`           |
//! | tag length   | `u32`           |
//! | tag          | UTF-8 bytes     |
//! | rows         | `count × dim` `f32`, explanation index order |

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::matrix::Matrix;
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 8] = b"BPEREMB1";

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("not an embedding file (bad magic bytes)")]
    BadMagic,
    #[error("truncated embedding file: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("{0} trailing bytes after the last row")]
    TrailingBytes(usize),
    #[error("encoder tag is not valid UTF-8")]
    BadTag,
    #[error("non-finite value in row {row}")]
    NonFinite { row: usize },
    #[error("file covers {found} explanations but the dataset has {expected}")]
    Coverage { expected: usize, found: usize },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingFile {
    pub tag: String,
    pub count: usize,
    pub dim: usize,
    /// Row-major `count × dim`.
    pub values: Vec<f32>,
}

impl EmbeddingFile {
    pub fn row(&self, idx: usize) -> &[f32] {
        &self.values[idx * self.dim..(idx + 1) * self.dim]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + self.tag.len() + 4 * self.values.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.count as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.tag.len() as u32).to_le_bytes());
        out.extend_from_slice(self.tag.as_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, EmbeddingError> {
        let need = |expected: usize| {
            if bytes.len() < expected {
                Err(EmbeddingError::Truncated {
                    expected,
                    found: bytes.len(),
                })
            } else {
                Ok(())
            }
        };
        need(8)?;
        if &bytes[..8] != MAGIC {
            return Err(EmbeddingError::BadMagic);
        }
        need(20)?;
        let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
        let (count, dim, tag_len) = (word(8), word(12), word(16));
        need(20 + tag_len)?;
        let tag = std::str::from_utf8(&bytes[20..20 + tag_len])
            .map_err(|_| EmbeddingError::BadTag)?
            .to_owned();
        let body = 20 + tag_len;
        let expected = body + 4 * count * dim;
        need(expected)?;
        if bytes.len() > expected {
            return Err(EmbeddingError::TrailingBytes(bytes.len() - expected));
        }
        let values: Vec<f32> = bytes[body..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite { row: pos / dim.max(1) });
        }
        Ok(Self {
            tag,
            count,
            dim,
            values,
        })
    }

    pub fn load(path: &Path) -> Result<Self, EmbeddingError> {
        let bytes = fs::read(path).map_err(|source| EmbeddingError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }

    pub fn save(&self, path: &Path) -> Result<(), EmbeddingError> {
        fs::write(path, self.to_bytes()).map_err(|source| EmbeddingError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    /// Raw vectors as a matrix, checked against the dataset's explanation count.
    pub fn to_matrix<F: Scalar>(&self, n_explanations: usize) -> Result<Matrix<F>, EmbeddingError> {
        if self.count != n_explanations {
            return Err(EmbeddingError::Coverage {
                expected: n_explanations,
                found: self.count,
            });
        }
        let data = self.values.iter().map(|&v| F::of(v as f64)).collect();
        Ok(Matrix::from_vec(self.count, self.dim, data).expect("length checked on read"))
    }

    /// Human-readable dump: header line, then `index<TAB>v1 v2 ...`.
    pub fn to_text(&self) -> String {
        let mut out = format!("count={} dim={} tag={}\n", self.count, self.dim, self.tag);
        for idx in 0..self.count {
            let row: Vec<String> = self.row(idx).iter().map(|v| v.to_string()).collect();
            out.push_str(&format!("{idx}\t{}\n", row.join(" ")));
        }
        out
    }
}
