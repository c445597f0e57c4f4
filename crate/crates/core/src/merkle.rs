//! Binary Merkle trees over [`Digest32`] leaves.
//!
//! Odd levels duplicate their last node; a single leaf is its own root.
//! Parents are `double_sha256(left || right)`.

use crate::hash::{double_sha256_parts, Digest32};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MerkleError {
    #[error("merkle tree needs at least one leaf")]
    Empty,
    #[error("leaf index {index} out of range for {len} leaves")]
    IndexOutOfRange { index: usize, len: usize },
}

/// Which side of the running hash a sibling sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MerkleProof {
    pub leaf_index: usize,
    pub siblings: Vec<(Digest32, Side)>,
}

fn parent(left: &Digest32, right: &Digest32) -> Digest32 {
    double_sha256_parts(&[left.as_bytes(), right.as_bytes()])
}

fn next_level(level: &[Digest32]) -> Vec<Digest32> {
    level
        .chunks(2)
        .map(|pair| match pair {
            [l, r] => parent(l, r),
            [l] => parent(l, l),
            _ => unreachable!(),
        })
        .collect()
}

pub fn merkle_root(leaves: &[Digest32]) -> Result<Digest32, MerkleError> {
    if leaves.is_empty() {
        return Err(MerkleError::Empty);
    }
    let mut level = leaves.to_vec();
    while level.len() > 1 {
        level = next_level(&level);
    }
    Ok(level[0])
}

pub fn merkle_prove(leaves: &[Digest32], index: usize) -> Result<MerkleProof, MerkleError> {
    if index >= leaves.len() {
        return Err(MerkleError::IndexOutOfRange { index, len: leaves.len() });
    }
    let mut siblings = Vec::new();
    let mut level = leaves.to_vec();
    let mut pos = index;
    while level.len() > 1 {
        let sibling = if pos.is_multiple_of(2) {
            // the last node of an odd level pairs with itself
            (*level.get(pos + 1).unwrap_or(&level[pos]), Side::Right)
        } else {
            (level[pos - 1], Side::Left)
        };
        siblings.push(sibling);
        level = next_level(&level);
        pos /= 2;
    }
    Ok(MerkleProof { leaf_index: index, siblings })
}

pub fn merkle_verify(root: &Digest32, leaf: &Digest32, proof: &MerkleProof) -> bool {
    let mut acc = *leaf;
    for (sibling, side) in &proof.siblings {
        acc = match side {
            Side::Left => parent(sibling, &acc),
            Side::Right => parent(&acc, sibling),
        };
    }
    acc == *root
}
