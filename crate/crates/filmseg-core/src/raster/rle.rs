//! Run-length codec for binary masks.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   8 bytes  "FSEGMASK"
//! version u32      currently 1
//! h, w    u32 each
//! first   u8       value of the first run (0 or 1)
//! n_runs  u32
//! runs    n_runs * u32, alternating starting from `first`
//! ```
//!
//! Runs traverse the mask row-major and must sum to `h * w` exactly.

use byteorder::{ByteOrder, LittleEndian};
use thiserror::Error;

use super::BitMask;

const MAGIC: &[u8; 8] = b"FSEGMASK";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum RleError {
    #[error("i/o error reading mask: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a mask file (bad magic)")]
    BadMagic,
    #[error("unsupported mask format version {found} (supported: {VERSION})")]
    UnsupportedVersion { found: u32 },
    #[error("mask payload truncated or malformed")]
    Truncated,
    #[error("run lengths sum to {got} but the header promises {expected} pixels")]
    RunSumMismatch { got: u64, expected: u64 },
    #[error("first run value must be 0 or 1, found {0}")]
    BadFirstValue(u8),
}

/// Serializes a mask to its RLE byte representation.
pub fn encode(mask: &BitMask) -> Vec<u8> {
    let mut runs: Vec<u32> = Vec::new();
    let first = mask.data.first().copied().unwrap_or(0);
    let mut current = first;
    let mut len: u32 = 0;
    for &v in &mask.data {
        if v == current {
            len += 1;
        } else {
            runs.push(len);
            current = v;
            len = 1;
        }
    }
    if !mask.data.is_empty() {
        runs.push(len);
    }

    let mut out = Vec::with_capacity(8 + 4 + 8 + 1 + 4 + runs.len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(mask.h as u32).to_le_bytes());
    out.extend_from_slice(&(mask.w as u32).to_le_bytes());
    out.push(first);
    out.extend_from_slice(&(runs.len() as u32).to_le_bytes());
    for r in &runs {
        out.extend_from_slice(&r.to_le_bytes());
    }
    out
}

/// Parses a mask from its RLE byte representation.
pub fn decode(bytes: &[u8]) -> Result<BitMask, RleError> {
    if bytes.len() < 8 + 4 + 8 + 1 + 4 {
        return Err(RleError::Truncated);
    }
    if &bytes[..8] != MAGIC {
        return Err(RleError::BadMagic);
    }
    let version = LittleEndian::read_u32(&bytes[8..12]);
    if version != VERSION {
        return Err(RleError::UnsupportedVersion { found: version });
    }
    let h = LittleEndian::read_u32(&bytes[12..16]) as usize;
    let w = LittleEndian::read_u32(&bytes[16..20]) as usize;
    let first = bytes[20];
    if first > 1 {
        return Err(RleError::BadFirstValue(first));
    }
    let n_runs = LittleEndian::read_u32(&bytes[21..25]) as usize;
    let body = &bytes[25..];
    if body.len() != n_runs * 4 {
        return Err(RleError::Truncated);
    }

    let expected = (h * w) as u64;
    let mut data = Vec::with_capacity(h * w);
    let mut value = first;
    for i in 0..n_runs {
        let len = LittleEndian::read_u32(&body[i * 4..i * 4 + 4]) as usize;
        data.resize(data.len() + len, value);
        value ^= 1;
    }
    if data.len() as u64 != expected {
        return Err(RleError::RunSumMismatch {
            got: data.len() as u64,
            expected,
        });
    }
    Ok(BitMask { h, w, data })
}

/// Writes a mask to disk in RLE form.
pub fn write_file(path: &std::path::Path, mask: &BitMask) -> Result<(), RleError> {
    std::fs::write(path, encode(mask))?;
    Ok(())
}

/// Reads a mask previously written with [`write_file`].
pub fn read_file(path: &std::path::Path) -> Result<BitMask, RleError> {
    decode(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn round_trips_random_masks() {
        let mut rng = crate::rng::rng_for(11, "rle-test", 0);
        for _ in 0..50 {
            let h = rng.gen_range(1..40);
            let w = rng.gen_range(1..40);
            let mut m = BitMask::zeros(h, w);
            for v in m.data.iter_mut() {
                *v = rng.gen_bool(0.3) as u8;
            }
            let back = decode(&encode(&m)).unwrap();
            assert_eq!(m, back);
        }
    }

    #[test]
    fn round_trips_uniform_masks() {
        for fill in [0u8, 1u8] {
            let m = BitMask {
                h: 7,
                w: 5,
                data: vec![fill; 35],
            };
            assert_eq!(decode(&encode(&m)).unwrap(), m);
        }
    }

    #[test]
    fn rejects_corrupt_headers() {
        let m = BitMask::zeros(4, 4);
        let mut bytes = encode(&m);
        bytes[0] = b'X';
        assert!(matches!(decode(&bytes), Err(RleError::BadMagic)));

        let mut bytes = encode(&m);
        bytes[8] = 99;
        assert!(matches!(
            decode(&bytes),
            Err(RleError::UnsupportedVersion { found: 99 })
        ));

        // Shrink a run so the pixel count no longer matches h*w.
        let mut bytes = encode(&m);
        let last = bytes.len() - 4;
        LittleEndian::write_u32(&mut bytes[last..], 3);
        assert!(matches!(decode(&bytes), Err(RleError::RunSumMismatch { .. })));
    }
}
