//! Small deterministic fleets and hand-built chains for tests and examples.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::biometric::{enroll_fleet, BiometricId, Registry, Signer, SyntheticFleet, DEFAULT_MATCH_THRESHOLD};
use crate::block::Block;
use crate::chain::{Chain, ChainState};
use crate::message::{MessageBody, V2xMessage};

pub const FIXTURE_DIM: usize = 32;

/// An enrolled fleet whose members have all unlocked their signers.
pub struct Fleet {
    inner: SyntheticFleet,
    signers: Vec<Signer>,
}

impl Fleet {
    pub fn new(size: usize, seed: u64) -> Self {
        let inner = enroll_fleet(seed, size, FIXTURE_DIM).expect("fixture enrollment");
        let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x5eed);
        let signers = inner
            .members
            .iter()
            .map(|m| m.present(&inner.key, DEFAULT_MATCH_THRESHOLD, &mut rng).expect("fixture unlock"))
            .collect();
        Self { inner, signers }
    }

    pub fn registry(&self) -> &Registry {
        &self.inner.registry
    }

    pub fn id(&self, i: usize) -> BiometricId {
        self.signers[i].biometric_id()
    }

    pub fn signer(&self, i: usize) -> &Signer {
        &self.signers[i]
    }

    pub fn signers(&self) -> &[Signer] {
        &self.signers
    }

    pub fn heartbeat(&self, i: usize, claim: u64, seq: u64, round: u64) -> V2xMessage {
        MessageBody::heartbeat(self.id(i), claim, seq, round).sign(self.signer(i)).expect("heartbeat fits")
    }

    /// A valid chain in which block `h` (1-based) is led by member
    /// `leaders[h - 1]`, elected as the only candidate, and carries one
    /// heartbeat from its leader. Block `h` is produced in round `h`.
    pub fn chain_with_leaders(&self, leaders: &[usize]) -> Chain {
        let mut chain = Chain::new();
        let mut state = ChainState::genesis(self.registry()).expect("non-empty fleet");
        for (i, &leader) in leaders.iter().enumerate() {
            let round = i as u64 + 1;
            let id = self.id(leader);
            let claim = state.ledger.credit(&id).expect("enrolled");
            let seq = state.seqs.last(&id).map_or(1, |s| s + 1);
            let block = Block::assemble(
                &chain.tip().header,
                round,
                vec![id],
                vec![self.heartbeat(leader, claim, seq, round)],
                self.signer(leader),
            );
            state = state.advance(&block).expect("replayable");
            chain.push(block);
        }
        chain
    }
}
