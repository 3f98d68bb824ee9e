//! Binary checkpoint container.
//!
//! One file holds a named set of tensors plus two JSON blobs (the config the
//! weights were built under, and free-form metadata such as fingerprints or
//! final metrics). Layout, all integers little-endian:
//!
//! ```text
//! magic    8 bytes   "FSEGCKPT"
//! version  u32       currently 1
//! hdr_len  u64
//! header   hdr_len bytes of JSON (kind, config, meta, tensor names + shapes)
//! payload  tensor data as f64 LE, concatenated in header order
//! trailer  32 bytes  SHA-256 over everything before it
//! ```
//!
//! Tensors are stored as `f64` regardless of the working scalar: `f32`
//! weights widen losslessly, and a checkpoint written by an `f32` run can be
//! loaded into an `f64` model (and vice versa, with rounding) without a
//! second format. Loading verifies magic, version, and checksum and reports
//! each failure as a distinct error.

use std::path::Path;

use byteorder::{ByteOrder, LittleEndian};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::hash::StreamHasher;

const MAGIC: &[u8; 8] = b"FSEGCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("i/o error on checkpoint {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} is not a checkpoint file (bad magic)")]
    BadMagic { path: String },
    #[error("checkpoint {path} uses format version {found}; this build supports {VERSION}")]
    UnsupportedVersion { path: String, found: u32 },
    #[error("checkpoint {path} failed its integrity check (stored and recomputed SHA-256 differ)")]
    ChecksumMismatch { path: String },
    #[error("checkpoint {path} is truncated or malformed")]
    Truncated { path: String },
    #[error("checkpoint {path} has a malformed header: {detail}")]
    MalformedHeader { path: String, detail: String },
    #[error("checkpoint {path} holds a '{found}' artifact but a '{expected}' was expected")]
    WrongKind {
        path: String,
        expected: String,
        found: String,
    },
}

/// One named tensor: shape plus row-major `f64` data.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorData {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// In-memory form of a checkpoint file.
#[derive(Clone, Debug)]
pub struct Container {
    /// Artifact kind tag, e.g. `"dual-encoder"` or `"decoder"`.
    pub kind: String,
    /// Config snapshot the weights were built under.
    pub config: serde_json::Value,
    /// Free-form metadata (fingerprints, metrics, provenance flags).
    pub meta: serde_json::Value,
    pub tensors: Vec<TensorData>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    kind: String,
    config: serde_json::Value,
    meta: serde_json::Value,
    tensors: Vec<HeaderTensor>,
}

#[derive(Serialize, Deserialize)]
struct HeaderTensor {
    name: String,
    shape: Vec<usize>,
}

fn io_err(path: &Path, source: std::io::Error) -> ContainerError {
    ContainerError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Serializes `c` to bytes (magic through trailer).
pub fn to_bytes(c: &Container) -> Vec<u8> {
    let header = Header {
        kind: c.kind.clone(),
        config: c.config.clone(),
        meta: c.meta.clone(),
        tensors: c
            .tensors
            .iter()
            .map(|t| HeaderTensor {
                name: t.name.clone(),
                shape: t.shape.clone(),
            })
            .collect(),
    };
    let header_bytes = serde_json::to_vec(&header).expect("header is valid JSON by construction");

    let payload_len: usize = c.tensors.iter().map(|t| t.data.len() * 8).sum();
    let mut out = Vec::with_capacity(8 + 4 + 8 + header_bytes.len() + payload_len + 32);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_bytes);
    for t in &c.tensors {
        debug_assert_eq!(t.shape.iter().product::<usize>(), t.data.len());
        let mut buf = vec![0u8; t.data.len() * 8];
        LittleEndian::write_f64_into(&t.data, &mut buf);
        out.extend_from_slice(&buf);
    }
    let mut hasher = StreamHasher::new();
    hasher.update(&out);
    out.extend_from_slice(&hasher.finish_bytes());
    out
}

/// Writes the container to `path`.
pub fn write_file(path: &Path, c: &Container) -> Result<(), ContainerError> {
    std::fs::write(path, to_bytes(c)).map_err(|e| io_err(path, e))
}

/// Reads and verifies a checkpoint. `expected_kind = Some(k)` additionally
/// rejects files holding a different artifact kind.
pub fn read_file(path: &Path, expected_kind: Option<&str>) -> Result<Container, ContainerError> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    from_bytes(&bytes, path, expected_kind)
}

fn from_bytes(
    bytes: &[u8],
    path: &Path,
    expected_kind: Option<&str>,
) -> Result<Container, ContainerError> {
    let p = || path.display().to_string();
    if bytes.len() < 8 + 4 + 8 + 32 {
        return Err(ContainerError::Truncated { path: p() });
    }
    if &bytes[..8] != MAGIC {
        return Err(ContainerError::BadMagic { path: p() });
    }
    let version = LittleEndian::read_u32(&bytes[8..12]);
    if version != VERSION {
        return Err(ContainerError::UnsupportedVersion {
            path: p(),
            found: version,
        });
    }

    // Verify the trailer before trusting any other field.
    let body = &bytes[..bytes.len() - 32];
    let stored = &bytes[bytes.len() - 32..];
    let mut hasher = StreamHasher::new();
    hasher.update(body);
    if hasher.finish_bytes() != stored {
        return Err(ContainerError::ChecksumMismatch { path: p() });
    }

    let hdr_len = LittleEndian::read_u64(&bytes[12..20]) as usize;
    let hdr_end = 20usize
        .checked_add(hdr_len)
        .ok_or(ContainerError::Truncated { path: p() })?;
    if hdr_end > body.len() {
        return Err(ContainerError::Truncated { path: p() });
    }
    let header: Header =
        serde_json::from_slice(&bytes[20..hdr_end]).map_err(|e| ContainerError::MalformedHeader {
            path: p(),
            detail: e.to_string(),
        })?;

    if let Some(expected) = expected_kind {
        if header.kind != expected {
            return Err(ContainerError::WrongKind {
                path: p(),
                expected: expected.to_string(),
                found: header.kind,
            });
        }
    }

    let mut tensors = Vec::with_capacity(header.tensors.len());
    let mut offset = hdr_end;
    for ht in header.tensors {
        let n: usize = ht.shape.iter().product();
        let end = offset
            .checked_add(n * 8)
            .ok_or(ContainerError::Truncated { path: p() })?;
        if end > body.len() {
            return Err(ContainerError::Truncated { path: p() });
        }
        let mut data = vec![0f64; n];
        LittleEndian::read_f64_into(&bytes[offset..end], &mut data);
        tensors.push(TensorData {
            name: ht.name,
            shape: ht.shape,
            data,
        });
        offset = end;
    }
    if offset != body.len() {
        return Err(ContainerError::Truncated { path: p() });
    }

    Ok(Container {
        kind: header.kind,
        config: header.config,
        meta: header.meta,
        tensors,
    })
}
