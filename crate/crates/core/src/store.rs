//! Chain store: one block per line.
//!
//! ```text
//! block format=1 version=<u32> height=<u64> prev=<hex> root=<hex> timestamp=<u64> leader=<hex> nonce=<u64> candidates=<hex,...|-> txs=<hex,...|-> sig=<hex>
//! ```
//!
//! Transactions are hex-encoded wire bytes. Parsing accepts only the exact
//! text that serializing the parsed block would produce, so a reloaded chain
//! hashes identically.

use crate::biometric::{BiometricId, Signature};
use crate::block::{Block, BlockHeader};
use crate::chain::Chain;
use crate::codec::{expect_field, parse_canonical_u64};
use crate::hash::{decode_hex, Digest32};
use crate::message::V2xMessage;

pub const STORE_FORMAT: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StoreError {
    #[error("no genesis: chain store is empty")]
    NoGenesis,
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

fn join_or_dash<I: Iterator<Item = String>>(items: I) -> String {
    let joined: Vec<String> = items.collect();
    if joined.is_empty() {
        "-".to_string()
    } else {
        joined.join(",")
    }
}

pub fn block_line(b: &Block) -> String {
    let h = &b.header;
    format!(
        "block format={STORE_FORMAT} version={} height={} prev={} root={} timestamp={} leader={} nonce={} candidates={} txs={} sig={}",
        h.version,
        h.height,
        h.prev_hash,
        h.merkle_root,
        h.timestamp,
        h.leader_id,
        h.nonce,
        join_or_dash(b.candidates.iter().map(BiometricId::to_hex)),
        join_or_dash(b.transactions.iter().map(|t| hex::encode(t.wire_bytes()))),
        b.leader_signature.to_hex(),
    )
}

pub fn chain_to_text(chain: &Chain) -> String {
    chain.blocks().iter().map(|b| block_line(b) + "\n").collect()
}

fn split_list(s: &str) -> Result<Vec<&str>, String> {
    if s == "-" {
        return Ok(Vec::new());
    }
    let items: Vec<&str> = s.split(',').collect();
    if items.iter().any(|i| i.is_empty()) {
        return Err("empty list item".into());
    }
    Ok(items)
}

pub fn parse_block_line(line: &str) -> Result<Block, String> {
    let mut parts = line.split(' ');
    if parts.next() != Some("block") {
        return Err("expected a block record".into());
    }
    let format = expect_field(parts.next(), "format")?;
    if format != STORE_FORMAT.to_string() {
        return Err(format!("unsupported store format {format:?}"));
    }
    let version = parse_canonical_u64(expect_field(parts.next(), "version")?)?;
    let version = u32::try_from(version).map_err(|_| format!("version {version} out of range"))?;
    let height = parse_canonical_u64(expect_field(parts.next(), "height")?)?;
    let digest = |v: &str, name: &str| Digest32::from_hex(v).map_err(|e| format!("{name}: {e}"));
    let prev_hash = digest(expect_field(parts.next(), "prev")?, "prev")?;
    let merkle_root = digest(expect_field(parts.next(), "root")?, "root")?;
    let timestamp = parse_canonical_u64(expect_field(parts.next(), "timestamp")?)?;
    let leader_id = BiometricId(digest(expect_field(parts.next(), "leader")?, "leader")?);
    let nonce = parse_canonical_u64(expect_field(parts.next(), "nonce")?)?;
    let candidates = split_list(expect_field(parts.next(), "candidates")?)?
        .into_iter()
        .map(|c| digest(c, "candidate").map(BiometricId))
        .collect::<Result<Vec<_>, _>>()?;
    let transactions = split_list(expect_field(parts.next(), "txs")?)?
        .into_iter()
        .enumerate()
        .map(|(i, t)| {
            let bytes = decode_hex(t).map_err(|e| format!("tx {i}: {e}"))?;
            V2xMessage::from_wire(&bytes).map_err(|e| format!("tx {i}: {e}"))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let sig = expect_field(parts.next(), "sig")?;
    let leader_signature = Signature::from_hex(sig).map_err(|e| format!("sig: {e}"))?;
    if parts.next().is_some() {
        return Err("trailing fields".into());
    }
    let block = Block {
        header: BlockHeader { version, prev_hash, merkle_root, timestamp, height, leader_id, nonce },
        candidates,
        transactions,
        leader_signature,
    };
    if block_line(&block) != line {
        return Err("non-canonical encoding".into());
    }
    Ok(block)
}

/// Parses a store without validating it. Line numbers in errors are 1-based.
pub fn chain_from_text(text: &str) -> Result<Chain, StoreError> {
    if text.is_empty() {
        return Err(StoreError::NoGenesis);
    }
    let lines: Vec<&str> = text.split_terminator('\n').collect();
    if !text.ends_with('\n') {
        return Err(StoreError::Parse { line: lines.len(), reason: "missing trailing newline".into() });
    }
    let blocks = lines
        .iter()
        .enumerate()
        .map(|(i, l)| parse_block_line(l).map_err(|reason| StoreError::Parse { line: i + 1, reason }))
        .collect::<Result<Vec<_>, _>>()?;
    Chain::from_blocks(blocks).ok_or(StoreError::NoGenesis)
}
