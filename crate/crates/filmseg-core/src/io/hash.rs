//! SHA-256 helpers used for artifact checksums and weight fingerprints.

use sha2::{Digest, Sha256};

/// Hex digest of a byte slice.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    hex_of(&h.finalize())
}

/// Hex digest of a file's contents.
pub fn sha256_file(path: &std::path::Path) -> std::io::Result<String> {
    let mut h = Sha256::new();
    let mut f = std::fs::File::open(path)?;
    std::io::copy(&mut f, &mut h)?;
    Ok(hex_of(&h.finalize()))
}

/// Incremental hasher wrapper so callers can stream tensor data without
/// materializing one giant buffer.
pub struct StreamHasher(Sha256);

impl StreamHasher {
    pub fn new() -> Self {
        StreamHasher(Sha256::new())
    }

    pub fn update(&mut self, bytes: &[u8]) {
        self.0.update(bytes);
    }

    pub fn finish_hex(self) -> String {
        hex_of(&self.0.finalize())
    }

    pub fn finish_bytes(self) -> [u8; 32] {
        self.0.finalize().into()
    }
}

impl Default for StreamHasher {
    fn default() -> Self {
        Self::new()
    }
}

fn hex_of(digest: &[u8]) -> String {
    let mut s = String::with_capacity(digest.len() * 2);
    for b in digest {
        s.push_str(&format!("{b:02x}"));
    }
    s
}
