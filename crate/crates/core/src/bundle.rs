//! Embedding bundles: a matrix of `f32` row vectors plus an id manifest.
//!
//! On disk a bundle is
//!
//! ```text
//! "PRSMEMB1"            8 bytes, ASCII magic
//! L                     u64, little endian
//! header                L bytes of UTF-8 JSON
//!                       {"n", "dim", "normalized", "ids", "provenance"}
//! payload               n * dim f32 values, little endian, row-major
//! ```
//!
//! and the file size must be exactly `16 + L + 4 * n * dim`.

use std::collections::HashSet;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const BUNDLE_MAGIC: &[u8; 8] = b"PRSMEMB1";

/// Allowed deviation from unit norm for rows of a bundle flagged `normalized`.
pub const NORM_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },
    #[error(
        "truncated payload: expected {expected} bytes after header at byte {offset}, found {found}"
    )]
    TruncatedPayload {
        offset: u64,
        expected: u64,
        found: u64,
    },
    #[error("trailing bytes: file has {extra} bytes past the payload end at byte {offset}")]
    TrailingBytes { offset: u64, extra: u64 },
    #[error("header declares {declared} ids but n = {n}")]
    IdCountMismatch { declared: usize, n: usize },
    #[error("dimension must be positive")]
    ZeroDimension,
    #[error("vector buffer holds {len} values, expected {expected} ({rows} x {dim})")]
    ShapeMismatch {
        len: usize,
        expected: usize,
        rows: usize,
        dim: usize,
    },
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("non-finite value in row {row} (id {id:?}), column {col}")]
    NonFinite { row: usize, id: String, col: usize },
    #[error("row {row} (id {id:?}) has L2 norm {norm}, bundle is flagged normalized")]
    NotUnitNorm { row: usize, id: String, norm: f64 },
    #[error("row {row} (id {id:?}) is all zeros and cannot be normalized")]
    ZeroRow { row: usize, id: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleHeader {
    pub n: usize,
    pub dim: usize,
    pub normalized: bool,
    pub ids: Vec<String>,
    pub provenance: String,
}

/// Immutable, validated matrix of embeddings with one string id per row.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBundle {
    ids: Vec<String>,
    dim: usize,
    vectors: Vec<f32>,
    normalized: bool,
    provenance: String,
}

impl EmbeddingBundle {
    /// Builds a bundle and checks every invariant: unique ids, matching
    /// shape, finite values, and unit rows when `normalized` is set.
    pub fn new(
        ids: Vec<String>,
        dim: usize,
        vectors: Vec<f32>,
        normalized: bool,
        provenance: impl Into<String>,
    ) -> Result<Self, BundleError> {
        let bundle = Self {
            ids,
            dim,
            vectors,
            normalized,
            provenance: provenance.into(),
        };
        bundle.validate()?;
        Ok(bundle)
    }

    fn validate(&self) -> Result<(), BundleError> {
        if self.dim == 0 {
            return Err(BundleError::ZeroDimension);
        }
        let rows = self.ids.len();
        let expected = rows * self.dim;
        if self.vectors.len() != expected {
            return Err(BundleError::ShapeMismatch {
                len: self.vectors.len(),
                expected,
                rows,
                dim: self.dim,
            });
        }
        let mut seen = HashSet::with_capacity(rows);
        for id in &self.ids {
            if !seen.insert(id.as_str()) {
                return Err(BundleError::DuplicateId(id.clone()));
            }
        }
        for (row, values) in self.vectors.chunks_exact(self.dim).enumerate() {
            if let Some(col) = values.iter().position(|v| !v.is_finite()) {
                return Err(BundleError::NonFinite {
                    row,
                    id: self.ids[row].clone(),
                    col,
                });
            }
            if self.normalized {
                let norm = l2_norm(values);
                if (norm - 1.0).abs() > NORM_TOLERANCE {
                    return Err(BundleError::NotUnitNorm {
                        row,
                        id: self.ids[row].clone(),
                        norm,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    /// Row-major backing storage.
    pub fn vectors(&self) -> &[f32] {
        &self.vectors
    }

    pub fn row(&self, index: usize) -> &[f32] {
        &self.vectors[index * self.dim..(index + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.vectors.chunks_exact(self.dim)
    }

    pub fn header(&self) -> BundleHeader {
        BundleHeader {
            n: self.len(),
            dim: self.dim,
            normalized: self.normalized,
            ids: self.ids.clone(),
            provenance: self.provenance.clone(),
        }
    }

    /// Serializes to the exact on-disk byte layout.
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header()).expect("header serializes");
        let mut out = Vec::with_capacity(16 + header.len() + 4 * self.vectors.len());
        out.extend_from_slice(BUNDLE_MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for v in &self.vectors {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, BundleError> {
        let (header, payload_offset) = parse_header(bytes)?;
        let payload = &bytes[payload_offset..];
        let expected = (header.n as u64)
            .checked_mul(header.dim as u64)
            .and_then(|v| v.checked_mul(4))
            .ok_or(BundleError::Format {
                offset: 8,
                message: "n * dim overflows".into(),
            })?;
        let found = payload.len() as u64;
        if found < expected {
            return Err(BundleError::TruncatedPayload {
                offset: payload_offset as u64,
                expected,
                found,
            });
        }
        if found > expected {
            return Err(BundleError::TrailingBytes {
                offset: payload_offset as u64 + expected,
                extra: found - expected,
            });
        }
        let vectors = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Self::new(
            header.ids,
            header.dim,
            vectors,
            header.normalized,
            header.provenance,
        )
    }

    /// Returns a copy with every row scaled to unit L2 norm.
    pub fn l2_normalize(&self) -> Result<Self, BundleError> {
        let mut vectors = Vec::with_capacity(self.vectors.len());
        for (row, values) in self.rows().enumerate() {
            let norm = l2_norm(values);
            if norm == 0.0 {
                return Err(BundleError::ZeroRow {
                    row,
                    id: self.ids[row].clone(),
                });
            }
            vectors.extend(values.iter().map(|&v| (f64::from(v) / norm) as f32));
        }
        Self::new(
            self.ids.clone(),
            self.dim,
            vectors,
            true,
            self.provenance.clone(),
        )
    }

    /// Map from id to row index.
    pub fn index(&self) -> std::collections::HashMap<&str, usize> {
        self.ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect()
    }
}

/// Parses magic, header length and JSON header. Returns the header and the
/// byte offset at which the payload starts.
pub fn parse_header(bytes: &[u8]) -> Result<(BundleHeader, usize), BundleError> {
    if bytes.len() < 8 {
        return Err(BundleError::Format {
            offset: bytes.len() as u64,
            message: "file shorter than the 8-byte magic".into(),
        });
    }
    if &bytes[..8] != BUNDLE_MAGIC {
        return Err(BundleError::Format {
            offset: 0,
            message: format!("magic mismatch, expected {:?}", "PRSMEMB1"),
        });
    }
    if bytes.len() < 16 {
        return Err(BundleError::Format {
            offset: bytes.len() as u64,
            message: "missing 8-byte header length".into(),
        });
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let available = (bytes.len() - 16) as u64;
    if header_len > available {
        return Err(BundleError::Format {
            offset: 8,
            message: format!("header length {header_len} exceeds remaining {available} bytes"),
        });
    }
    let end = 16 + header_len as usize;
    let header: BundleHeader =
        serde_json::from_slice(&bytes[16..end]).map_err(|e| BundleError::Format {
            offset: 16 + json_error_offset(&bytes[16..end], &e),
            message: format!("invalid JSON header: {e}"),
        })?;
    if header.ids.len() != header.n {
        return Err(BundleError::IdCountMismatch {
            declared: header.ids.len(),
            n: header.n,
        });
    }
    Ok((header, end))
}

fn json_error_offset(text: &[u8], err: &serde_json::Error) -> u64 {
    // serde_json reports 1-based line/column; convert to a byte offset.
    let mut line = 1;
    let mut offset = 0;
    for (i, b) in text.iter().enumerate() {
        if line == err.line() {
            offset = i;
            break;
        }
        if *b == b'\n' {
            line += 1;
        }
    }
    (offset + err.column().saturating_sub(1)) as u64
}

pub fn read_bundle(path: impl AsRef<Path>) -> Result<EmbeddingBundle, BundleError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| BundleError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    EmbeddingBundle::from_bytes(&bytes)
}

/// Writes `bundle` to `path`. The bundle is re-validated before the file is
/// created so that an invalid bundle never reaches disk.
pub fn write_bundle(bundle: &EmbeddingBundle, path: impl AsRef<Path>) -> Result<(), BundleError> {
    bundle.validate()?;
    let path = path.as_ref();
    fs::write(path, bundle.to_bytes()).map_err(|source| BundleError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn l2_norm(values: &[f32]) -> f64 {
    values
        .iter()
        .map(|&v| f64::from(v) * f64::from(v))
        .sum::<f64>()
        .sqrt()
}
