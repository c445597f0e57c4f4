use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::biometric::{verify, BiometricId, Registry, Signature, Signer};
use crate::block::Block;
use crate::credit::{self, CreditLedger};
use crate::hash::Digest32;

const VOTE_DOMAIN: &[u8] = b"bbc-vote";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Decision {
    Accept,
    Reject,
}

impl Decision {
    fn code(self) -> u8 {
        match self {
            Decision::Accept => 1,
            Decision::Reject => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vote {
    pub voter: BiometricId,
    pub round: u64,
    pub block_hash: Digest32,
    pub decision: Decision,
    pub signature: Signature,
}

impl Vote {
    pub fn cast(signer: &Signer, round: u64, block_hash: Digest32, decision: Decision) -> Self {
        let mut v = Self { voter: signer.biometric_id(), round, block_hash, decision, signature: Signature::EMPTY };
        v.signature = signer.sign(&v.canonical_bytes());
        v
    }

    /// `"bbc-vote" || voter || round || block_hash || decision`.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(VOTE_DOMAIN.len() + 73);
        out.extend_from_slice(VOTE_DOMAIN);
        out.extend_from_slice(self.voter.as_bytes());
        out.extend_from_slice(&self.round.to_be_bytes());
        out.extend_from_slice(self.block_hash.as_bytes());
        out.push(self.decision.code());
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    Collecting,
    Proposed,
    Committed,
    Skipped,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum VoteError {
    #[error("vote for round {vote}, state is at round {state}")]
    WrongRound { vote: u64, state: u64 },
    #[error("vote arrived in phase {0}")]
    WrongPhase(Phase),
    #[error("vote is for a different block")]
    WrongBlock,
    #[error("voter is not enrolled")]
    UnknownVoter,
    #[error("vote signature does not verify")]
    BadSignature,
    #[error("voter already voted this round")]
    Duplicate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum TransitionError {
    #[error("cannot move from {from} to {to}")]
    Illegal { from: Phase, to: Phase },
    #[error("proposal is not from the elected leader")]
    NotLeader,
}

/// True iff `accepts` is a strict majority of `online`.
pub fn commits(accepts: usize, online: usize) -> bool {
    2 * accepts > online
}

/// The credit-maximal candidate, or `None` when nobody qualified.
pub fn elect(candidates: &BTreeSet<BiometricId>, ledger: &CreditLedger) -> Option<BiometricId> {
    credit::leader(candidates, ledger).ok()
}

/// One node's view of a consensus round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundState {
    pub round: u64,
    pub candidates: BTreeSet<BiometricId>,
    pub leader: Option<BiometricId>,
    pub proposal: Option<Block>,
    pub votes: BTreeMap<BiometricId, Decision>,
    pub phase: Phase,
}

impl RoundState {
    pub fn new(round: u64) -> Self {
        Self {
            round,
            candidates: BTreeSet::new(),
            leader: None,
            proposal: None,
            votes: BTreeMap::new(),
            phase: Phase::Collecting,
        }
    }

    /// Fixes the candidate set and runs the election. An empty set skips
    /// the round at once.
    pub fn elect(&mut self, candidates: BTreeSet<BiometricId>, ledger: &CreditLedger) -> Option<BiometricId> {
        if self.phase != Phase::Collecting {
            return self.leader;
        }
        self.leader = elect(&candidates, ledger);
        self.candidates = candidates;
        if self.leader.is_none() {
            self.phase = Phase::Skipped;
        }
        self.leader
    }

    pub fn accept_proposal(&mut self, block: Block) -> Result<(), TransitionError> {
        if self.phase != Phase::Collecting {
            return Err(TransitionError::Illegal { from: self.phase, to: Phase::Proposed });
        }
        if self.leader != Some(block.header.leader_id) {
            return Err(TransitionError::NotLeader);
        }
        self.proposal = Some(block);
        self.phase = Phase::Proposed;
        Ok(())
    }

    pub fn proposal_hash(&self) -> Option<Digest32> {
        self.proposal.as_ref().map(Block::hash)
    }

    /// Records a signed vote for the current proposal. Duplicates keep the
    /// first decision.
    pub fn record_vote(&mut self, vote: &Vote, registry: &Registry) -> Result<(), VoteError> {
        if vote.round != self.round {
            return Err(VoteError::WrongRound { vote: vote.round, state: self.round });
        }
        // late votes still count towards the tally once committed
        if !matches!(self.phase, Phase::Proposed | Phase::Committed) {
            return Err(VoteError::WrongPhase(self.phase));
        }
        if self.proposal_hash() != Some(vote.block_hash) {
            return Err(VoteError::WrongBlock);
        }
        let key = registry.public_key(&vote.voter).ok_or(VoteError::UnknownVoter)?;
        if !verify(&key, &vote.canonical_bytes(), &vote.signature) {
            return Err(VoteError::BadSignature);
        }
        if self.votes.contains_key(&vote.voter) {
            return Err(VoteError::Duplicate);
        }
        self.votes.insert(vote.voter, vote.decision);
        Ok(())
    }

    /// `(accepts, rejects)`.
    pub fn tally(&self) -> (usize, usize) {
        let accepts = self.votes.values().filter(|d| **d == Decision::Accept).count();
        (accepts, self.votes.len() - accepts)
    }

    /// Commits the proposal once accepts are a strict majority of `online`.
    pub fn try_commit(&mut self, online: usize) -> Phase {
        if self.phase == Phase::Proposed && commits(self.tally().0, online) {
            self.phase = Phase::Committed;
        }
        self.phase
    }

    /// Round deadline: anything not committed is skipped.
    pub fn timeout(&mut self) -> Phase {
        if self.phase != Phase::Committed {
            self.phase = Phase::Skipped;
        }
        self.phase
    }

    pub fn committed_block(&self) -> Option<&Block> {
        match self.phase {
            Phase::Committed => self.proposal.as_ref(),
            _ => None,
        }
    }
}
