use std::collections::BTreeSet;

use crate::biometric::{BiometricId, Registry, Signer};
use crate::block::Block;
use crate::chain::ChainState;
use crate::message::{validate_message, MessageBody, Rejection, V2xMessage};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Proposal {
    pub block: Block,
    /// Mempool messages left out, with the reason.
    pub excluded: Vec<(V2xMessage, Rejection)>,
    /// True when the block carries the leader's heartbeat instead.
    pub heartbeat: bool,
}

/// Builds the leader's block for `round` on top of `parent`.
///
/// Every mempool message is re-checked against the committed state; a
/// sender may not reuse a sequence number inside one block. When nothing
/// survives, the block carries one heartbeat from the leader using
/// `heartbeat_seq`.
#[allow(clippy::too_many_arguments)]
pub fn propose(
    leader: &Signer,
    round: u64,
    candidates: &BTreeSet<BiometricId>,
    mempool: &[V2xMessage],
    parent: &Block,
    state: &ChainState,
    registry: &Registry,
    heartbeat_seq: u64,
) -> Proposal {
    let mut pool: Vec<&V2xMessage> = mempool.iter().collect();
    pool.sort_by_cached_key(|m| m.digest());
    let mut used = BTreeSet::new();
    let mut included = Vec::new();
    let mut excluded = Vec::new();
    for msg in pool {
        let verdict = validate_message(msg, &state.ledger, registry, round, &state.seqs).and_then(|()| {
            if used.insert((msg.sender(), msg.body.seq)) {
                Ok(())
            } else {
                Err(Rejection::Replay)
            }
        });
        match verdict {
            Ok(()) => included.push(msg.clone()),
            Err(code) => excluded.push((msg.clone(), code)),
        }
    }
    let heartbeat = included.is_empty();
    if heartbeat {
        let me = leader.biometric_id();
        let claim = state.ledger.credit(&me).unwrap_or_default();
        let hb =
            MessageBody::heartbeat(me, claim, heartbeat_seq, round).sign(leader).expect("heartbeat payload is small");
        included.push(hb);
    }
    let block = Block::assemble(&parent.header, round, candidates.iter().copied().collect(), included, leader);
    Proposal { block, excluded, heartbeat }
}
