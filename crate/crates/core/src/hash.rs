//! Double SHA-256 digests and strict hex helpers.

use std::fmt;

use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HexError {
    #[error("invalid hex character at position {position}")]
    InvalidChar { position: usize },
    #[error("odd number of hex digits")]
    OddLength,
    #[error("expected {expected} bytes, found {found}")]
    Length { expected: usize, found: usize },
}

/// A 32-byte digest. Renders as 64 lowercase hex characters.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Digest32(pub [u8; 32]);

impl Digest32 {
    pub const ZERO: Digest32 = Digest32([0u8; 32]);

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    /// Parses exactly 64 lowercase hex characters.
    pub fn from_hex(s: &str) -> Result<Self, HexError> {
        let bytes = decode_hex(s)?;
        let arr: [u8; 32] = bytes.try_into().map_err(|v: Vec<u8>| HexError::Length { expected: 32, found: v.len() })?;
        Ok(Digest32(arr))
    }
}

impl fmt::Display for Digest32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Digest32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest32({})", self.to_hex())
    }
}

impl AsRef<[u8]> for Digest32 {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}

/// SHA-256 applied twice.
pub fn double_sha256(data: &[u8]) -> Digest32 {
    let first = Sha256::digest(data);
    let second = Sha256::digest(first);
    Digest32(second.into())
}

/// Double SHA-256 over the concatenation of `parts`, without allocating the joined buffer.
pub fn double_sha256_parts(parts: &[&[u8]]) -> Digest32 {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update(part);
    }
    let first = hasher.finalize();
    Digest32(Sha256::digest(first).into())
}

/// Decodes lowercase hex only. Uppercase digits are rejected so that every
/// value has exactly one textual form.
pub fn decode_hex(s: &str) -> Result<Vec<u8>, HexError> {
    if let Some(pos) = s.bytes().position(|b| !matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
        return Err(HexError::InvalidChar { position: pos });
    }
    if !s.len().is_multiple_of(2) {
        return Err(HexError::OddLength);
    }
    hex::decode(s).map_err(|_| HexError::OddLength)
}
