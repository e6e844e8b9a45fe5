//! Versioned text container for parameter tensors.
//!
//! ```text
//! bper-checkpoint 1
//! scalar f64
//! meta model bper
//! tensor user 3 2
//! 0.1 -0.25
//! ...
//! end
//! ```
//!
//! Values use Rust's shortest round-trip formatting, so a write/read cycle
//! reproduces every float bit-for-bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::matrix::Matrix;
use crate::scalar::Scalar;

pub const MAGIC: &str = "bper-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("checkpoint stores {found} values but {expected} was requested")]
    ScalarMismatch { expected: &'static str, found: String },
    #[error("missing tensor `{0}`")]
    MissingTensor(String),
    #[error("missing metadata `{0}`")]
    MissingMeta(String),
    #[error("tensor `{name}` has shape {found:?}, expected {expected:?}")]
    Shape {
        name: String,
        found: (usize, usize),
        expected: (usize, usize),
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<F> {
    pub meta: Vec<(String, String)>,
    pub tensors: Vec<(String, Matrix<F>)>,
}

impl<F: Scalar> Default for Checkpoint<F> {
    fn default() -> Self {
        Self {
            meta: Vec::new(),
            tensors: Vec::new(),
        }
    }
}

impl<F: Scalar> Checkpoint<F> {
    pub fn push_meta(&mut self, key: &str, value: impl ToString) {
        self.meta.push((key.to_owned(), value.to_string()));
    }

    pub fn push_matrix(&mut self, name: &str, m: &Matrix<F>) {
        self.tensors.push((name.to_owned(), m.clone()));
    }

    pub fn push_vector(&mut self, name: &str, v: &[F]) {
        let m = Matrix::from_vec(1, v.len(), v.to_vec()).expect("length matches");
        self.tensors.push((name.to_owned(), m));
    }

    pub fn meta(&self, key: &str) -> Result<&str, CheckpointError> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| CheckpointError::MissingMeta(key.to_owned()))
    }

    pub fn matrix(&self, name: &str) -> Result<&Matrix<F>, CheckpointError> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
            .ok_or_else(|| CheckpointError::MissingTensor(name.to_owned()))
    }

    pub fn matrix_shaped(&self, name: &str, rows: usize, cols: usize) -> Result<Matrix<F>, CheckpointError> {
        let m = self.matrix(name)?;
        if (m.rows(), m.cols()) != (rows, cols) {
            return Err(CheckpointError::Shape {
                name: name.to_owned(),
                found: (m.rows(), m.cols()),
                expected: (rows, cols),
            });
        }
        Ok(m.clone())
    }

    pub fn vector(&self, name: &str) -> Result<Vec<F>, CheckpointError> {
        Ok(self.matrix(name)?.as_slice().to_vec())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{MAGIC} {VERSION}");
        let _ = writeln!(out, "scalar {}", F::NAME);
        for (k, v) in &self.meta {
            let _ = writeln!(out, "meta {k} {v}");
        }
        for (name, m) in &self.tensors {
            let _ = writeln!(out, "tensor {name} {} {}", m.rows(), m.cols());
            for r in 0..m.rows() {
                let row: Vec<String> = m.row(r).iter().map(|v| v.to_string()).collect();
                let _ = writeln!(out, "{}", row.join(" "));
            }
        }
        out.push_str("end\n");
        out
    }

    pub fn from_text(text: &str) -> Result<Self, CheckpointError> {
        let mut lines = text.lines().enumerate().map(|(n, l)| (n + 1, l));
        let parse_err = |line: usize, reason: &str| CheckpointError::Parse {
            line,
            reason: reason.to_owned(),
        };
        let (n, header) = lines.next().ok_or_else(|| parse_err(1, "empty checkpoint"))?;
        if header != format!("{MAGIC} {VERSION}") {
            return Err(parse_err(n, "unsupported header"));
        }
        let (n, scalar) = lines.next().ok_or_else(|| parse_err(2, "missing scalar line"))?;
        match scalar.strip_prefix("scalar ") {
            Some(tag) if tag == F::NAME => {}
            Some(tag) => {
                return Err(CheckpointError::ScalarMismatch {
                    expected: F::NAME,
                    found: tag.to_owned(),
                })
            }
            None => return Err(parse_err(n, "missing scalar line")),
        }
        let mut ckpt = Self::default();
        loop {
            let (n, line) = lines.next().ok_or_else(|| parse_err(0, "missing `end`"))?;
            if line == "end" {
                return Ok(ckpt);
            }
            if let Some(rest) = line.strip_prefix("meta ") {
                let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                ckpt.meta.push((k.to_owned(), v.to_owned()));
            } else if let Some(rest) = line.strip_prefix("tensor ") {
                let fields: Vec<&str> = rest.split(' ').collect();
                if fields.len() != 3 {
                    return Err(parse_err(n, "expected `tensor NAME ROWS COLS`"));
                }
                let rows: usize = fields[1].parse().map_err(|_| parse_err(n, "bad row count"))?;
                let cols: usize = fields[2].parse().map_err(|_| parse_err(n, "bad column count"))?;
                let mut data = Vec::with_capacity(rows * cols);
                for _ in 0..rows {
                    let (rn, row) = lines.next().ok_or_else(|| parse_err(n, "truncated tensor"))?;
                    let before = data.len();
                    for tok in row.split_ascii_whitespace() {
                        data.push(tok.parse::<F>().map_err(|_| parse_err(rn, "bad float"))?);
                    }
                    if data.len() - before != cols {
                        return Err(parse_err(rn, "row length does not match column count"));
                    }
                }
                let m = Matrix::from_vec(rows, cols, data).expect("shape checked per row");
                ckpt.tensors.push((fields[0].to_owned(), m));
            } else {
                return Err(parse_err(n, "unexpected line"));
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        fs::write(path, self.to_text()).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let text = fs::read_to_string(path).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_text(&text)
    }
}
