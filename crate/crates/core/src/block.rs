//! Block headers, blocks and their canonical byte layout.

use crate::biometric::{BiometricId, Signature, Signer};
use crate::hash::{double_sha256, double_sha256_parts, Digest32};
use crate::merkle::merkle_root;
use crate::message::V2xMessage;

pub const PROTOCOL_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 124;

const SEAL_DOMAIN: &[u8] = b"bbc-block-seal";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HeaderParseError {
    #[error("header must be {HEADER_LEN} bytes, found {0}")]
    Length(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BlockHeader {
    pub version: u32,
    pub prev_hash: Digest32,
    pub merkle_root: Digest32,
    /// Seconds since epoch; the simulator uses logical round seconds.
    pub timestamp: u64,
    pub height: u64,
    pub leader_id: BiometricId,
    /// Consensus round that produced the block.
    pub nonce: u64,
}

impl BlockHeader {
    pub fn genesis() -> Self {
        Self {
            version: PROTOCOL_VERSION,
            prev_hash: Digest32::ZERO,
            merkle_root: Digest32::ZERO,
            timestamp: 0,
            height: 0,
            leader_id: BiometricId(Digest32::ZERO),
            nonce: 0,
        }
    }

    /// `version(4) || prev_hash(32) || merkle_root(32) || timestamp(8) ||
    /// height(8) || leader_id(32) || nonce(8)`, integers big-endian.
    pub fn canonical_bytes(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[0..4].copy_from_slice(&self.version.to_be_bytes());
        out[4..36].copy_from_slice(self.prev_hash.as_bytes());
        out[36..68].copy_from_slice(self.merkle_root.as_bytes());
        out[68..76].copy_from_slice(&self.timestamp.to_be_bytes());
        out[76..84].copy_from_slice(&self.height.to_be_bytes());
        out[84..116].copy_from_slice(self.leader_id.as_bytes());
        out[116..124].copy_from_slice(&self.nonce.to_be_bytes());
        out
    }

    pub fn from_canonical_bytes(bytes: &[u8]) -> Result<Self, HeaderParseError> {
        let b: &[u8; HEADER_LEN] = bytes.try_into().map_err(|_| HeaderParseError::Length(bytes.len()))?;
        let digest = |r: std::ops::Range<usize>| Digest32(b[r].try_into().unwrap());
        let int = |r: std::ops::Range<usize>| u64::from_be_bytes(b[r].try_into().unwrap());
        Ok(Self {
            version: u32::from_be_bytes(b[0..4].try_into().unwrap()),
            prev_hash: digest(4..36),
            merkle_root: digest(36..68),
            timestamp: int(68..76),
            height: int(76..84),
            leader_id: BiometricId(digest(84..116)),
            nonce: int(116..124),
        })
    }
}

pub fn canonical_header_bytes(h: &BlockHeader) -> [u8; HEADER_LEN] {
    h.canonical_bytes()
}

pub fn block_hash(h: &BlockHeader) -> Digest32 {
    double_sha256(&h.canonical_bytes())
}

/// Merkle root over transaction digests; the all-zero digest for an empty list.
pub fn transactions_root(transactions: &[V2xMessage]) -> Digest32 {
    let leaves: Vec<Digest32> = transactions.iter().map(V2xMessage::digest).collect();
    merkle_root(&leaves).unwrap_or(Digest32::ZERO)
}

/// Commitment to the sorted candidate set the leader was elected from.
pub fn candidates_digest(candidates: &[BiometricId]) -> Digest32 {
    let parts: Vec<&[u8]> = candidates.iter().map(|c| c.as_bytes().as_slice()).collect();
    double_sha256_parts(&parts)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub header: BlockHeader,
    /// Qualified candidates of the round, strictly ascending. Empty for genesis.
    pub candidates: Vec<BiometricId>,
    /// Strictly ascending by transaction digest. Empty only for genesis.
    pub transactions: Vec<V2xMessage>,
    pub leader_signature: Signature,
}

impl Block {
    pub fn genesis() -> Self {
        Self {
            header: BlockHeader::genesis(),
            candidates: Vec::new(),
            transactions: Vec::new(),
            leader_signature: Signature::EMPTY,
        }
    }

    pub fn hash(&self) -> Digest32 {
        block_hash(&self.header)
    }

    /// Bytes the leader signs: the block hash bound to the candidate set.
    pub fn seal_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(SEAL_DOMAIN.len() + 64);
        out.extend_from_slice(SEAL_DOMAIN);
        out.extend_from_slice(self.hash().as_bytes());
        out.extend_from_slice(candidates_digest(&self.candidates).as_bytes());
        out
    }

    /// Assembles and signs a block on top of `parent`. Transactions are put
    /// in canonical order and de-duplicated by digest.
    pub fn assemble(
        parent: &BlockHeader,
        round: u64,
        candidates: Vec<BiometricId>,
        mut transactions: Vec<V2xMessage>,
        leader: &Signer,
    ) -> Self {
        transactions.sort_by_cached_key(V2xMessage::digest);
        transactions.dedup_by(|a, b| a.digest() == b.digest());
        let header = BlockHeader {
            version: PROTOCOL_VERSION,
            prev_hash: block_hash(parent),
            merkle_root: transactions_root(&transactions),
            timestamp: round.max(parent.timestamp),
            height: parent.height + 1,
            leader_id: leader.biometric_id(),
            nonce: round,
        };
        let mut block = Self { header, candidates, transactions, leader_signature: Signature::EMPTY };
        block.leader_signature = leader.sign(&block.seal_bytes());
        block
    }

    pub fn is_genesis(&self) -> bool {
        *self == Self::genesis()
    }
}
