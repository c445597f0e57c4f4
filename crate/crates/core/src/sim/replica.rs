use std::collections::{BTreeMap, BTreeSet};

use crate::biometric::{BiometricId, Registry, Signer};
use crate::block::Block;
use crate::chain::{validate_block, BlockContext, BlockRejection, Chain, ChainState};
use crate::consensus::{
    propose, qualify, Decision, DeliveryIndex, DrivingProof, Phase, Proposal, Qualification, RoundState, Vote,
    VoteError,
};
use crate::hash::Digest32;
use crate::message::{validate_message, Rejection, SeqTracker, V2xMessage, FRESHNESS_WINDOW};

/// Messages an adversary keeps for later replay.
const CAPTURE_LIMIT: usize = 64;

/// One node's protocol state: committed chain, mempool and current round.
#[derive(Debug, Clone)]
pub struct Replica {
    chain: Chain,
    state: ChainState,
    seen: SeqTracker,
    mempool: BTreeMap<Digest32, V2xMessage>,
    proofs: Vec<DrivingProof>,
    round: RoundState,
    next_seq: u64,
    captured: Vec<V2xMessage>,
}

impl Replica {
    pub fn new(registry: &Registry) -> Self {
        Self {
            chain: Chain::new(),
            state: ChainState::genesis(registry).expect("registry is not empty"),
            seen: SeqTracker::new(),
            mempool: BTreeMap::new(),
            proofs: Vec::new(),
            round: RoundState::new(0),
            next_seq: 1,
            captured: Vec::new(),
        }
    }

    pub fn chain(&self) -> &Chain {
        &self.chain
    }

    pub fn state(&self) -> &ChainState {
        &self.state
    }

    pub fn round(&self) -> &RoundState {
        &self.round
    }

    pub fn mempool_len(&self) -> usize {
        self.mempool.len()
    }

    pub fn captured(&self) -> &[V2xMessage] {
        &self.captured
    }

    pub fn take_seq(&mut self) -> u64 {
        let s = self.next_seq;
        self.next_seq += 1;
        s
    }

    /// Starts `round` and drops mempool entries that can never become legal.
    pub fn begin_round(&mut self, round: u64) {
        self.round = RoundState::new(round);
        self.proofs.clear();
        let committed = &self.state.seqs;
        self.mempool.retain(|_, m| {
            m.body.timestamp + FRESHNESS_WINDOW >= round && !committed.is_replay(&m.sender(), m.body.seq)
        });
    }

    /// A message this node signed itself goes straight into its mempool.
    pub fn record_own(&mut self, msg: &V2xMessage) {
        self.seen.record(msg.sender(), msg.body.seq);
        self.mempool.insert(msg.digest(), msg.clone());
    }

    pub fn receive_message(&mut self, msg: &V2xMessage, registry: &Registry) -> Result<(), Rejection> {
        validate_message(msg, &self.state.ledger, registry, self.round.round, &self.seen)?;
        self.seen.record(msg.sender(), msg.body.seq);
        self.mempool.insert(msg.digest(), msg.clone());
        Ok(())
    }

    /// Keeps any received message for replay, legal or not.
    pub fn capture(&mut self, msg: &V2xMessage) {
        if self.captured.len() == CAPTURE_LIMIT {
            self.captured.remove(0);
        }
        self.captured.push(msg.clone());
    }

    pub fn receive_proof(&mut self, proof: DrivingProof) {
        self.proofs.push(proof);
    }

    /// Qualifies the proofs received this round and elects a leader.
    pub fn elect(
        &mut self,
        window: u64,
        index: &DeliveryIndex,
        registry: &Registry,
        eligible: &BTreeSet<BiometricId>,
    ) -> (Qualification, Option<BiometricId>) {
        self.proofs.sort_by(|a, b| a.subject.cmp(&b.subject).then_with(|| a.signature.0.cmp(&b.signature.0)));
        let q = qualify(&self.proofs, self.round.round, window, index, registry, eligible);
        let leader = self.round.elect(q.candidates.clone(), &self.state.ledger);
        (q, leader)
    }

    pub fn propose(&mut self, signer: &Signer, registry: &Registry) -> Proposal {
        let pool: Vec<V2xMessage> = self.mempool.values().cloned().collect();
        let seq = self.next_seq;
        let p = propose(
            signer,
            self.round.round,
            &self.round.candidates,
            &pool,
            self.chain.tip(),
            &self.state,
            registry,
            seq,
        );
        if p.heartbeat {
            self.next_seq += 1;
        }
        p
    }

    /// Validates a proposal against this node's own chain and candidate set.
    pub fn check_proposal(&mut self, block: &Block, registry: &Registry) -> Result<(), BlockRejection> {
        let ctx = BlockContext { state: &self.state, registry, expected_candidates: Some(&self.round.candidates) };
        validate_block(block, self.chain.tip(), &ctx)?;
        self.round.accept_proposal(block.clone()).map_err(|_| BlockRejection::WrongLeader)
    }

    pub fn vote(&self, signer: &Signer, block: &Block, decision: Decision) -> Vote {
        Vote::cast(signer, self.round.round, block.hash(), decision)
    }

    /// Records a vote; commits once the proposal holds a majority of `online`.
    /// Returns the phase after the vote.
    pub fn receive_vote(&mut self, vote: &Vote, registry: &Registry, online: usize) -> Result<Phase, VoteError> {
        let before = self.round.phase;
        self.round.record_vote(vote, registry)?;
        let after = self.round.try_commit(online);
        if before != Phase::Committed && after == Phase::Committed {
            let block = self.round.committed_block().expect("committed").clone();
            self.apply(block);
        }
        Ok(after)
    }

    fn apply(&mut self, block: Block) {
        self.state = self.state.advance(&block).expect("validated block replays");
        for tx in &block.transactions {
            self.seen.record(tx.sender(), tx.body.seq);
            self.mempool.remove(&tx.digest());
        }
        self.chain.push(block);
    }

    pub fn timeout(&mut self) -> Phase {
        self.round.timeout()
    }
}
