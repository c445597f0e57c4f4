use rand::Rng;

use super::replica::Replica;
use super::scenario::AdversaryMode;
use super::world::Node;
use crate::biometric::Signature;
use crate::message::{MessageBody, MessageKind, MessageType, V2xMessage};

fn random_body(node: &mut Node, replica: &mut Replica, round: u64, claim: u64) -> MessageBody {
    let len = node.rng.random_range(8..=48);
    let mut payload = vec![0u8; len];
    node.rng.fill(&mut payload[..]);
    MessageBody {
        kind: MessageKind::V2V,
        msg_type: MessageType::SafetyAlert,
        payload,
        sender_id: node.signer.biometric_id(),
        credit_claim: claim,
        seq: replica.take_seq(),
        timestamp: round,
    }
}

/// Traffic an adversary emits at the start of `round`.
///
/// Forgers attach random signature bytes, inflaters sign a claim above their
/// committed credit, replayers re-send verbatim a captured message whose
/// sequence number the committed chain has already passed, and droppers stay silent.
pub fn adversary_act(node: &mut Node, replica: &mut Replica, round: u64, inflate_by: u64) -> Vec<V2xMessage> {
    let mode = match node.behavior {
        super::world::Behavior::Adversary(m) => m,
        super::world::Behavior::Honest => return Vec::new(),
    };
    let credit = replica.state().ledger.credit(&node.signer.biometric_id()).unwrap_or_default();
    match mode {
        AdversaryMode::None | AdversaryMode::Drop => Vec::new(),
        AdversaryMode::ForgeSignature => {
            let body = random_body(node, replica, round, credit);
            let mut sig = [0u8; 64];
            node.rng.fill(&mut sig[..]);
            vec![V2xMessage { body, signature: Signature(sig) }]
        }
        AdversaryMode::InflateClaim => {
            let body = random_body(node, replica, round, credit + inflate_by);
            vec![body.sign(&node.signer).expect("small payload")]
        }
        AdversaryMode::Replay => {
            let committed = &replica.state().seqs;
            let pool: Vec<&V2xMessage> =
                replica.captured().iter().filter(|m| committed.is_replay(&m.sender(), m.body.seq)).collect();
            if pool.is_empty() {
                return Vec::new();
            }
            let pick = node.rng.random_range(0..pool.len());
            vec![pool[pick].clone()]
        }
    }
}
