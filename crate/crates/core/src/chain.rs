//! Chains, block validation and fork choice.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;

use crate::biometric::{verify, BiometricId, Registry};
use crate::block::{block_hash, transactions_root, Block, PROTOCOL_VERSION};
use crate::credit::{self, apply_block, initial_ledger, CreditError, CreditLedger};
use crate::hash::Digest32;
use crate::message::{validate_message, Rejection, SeqTracker};

/// Why a block was refused. Each check has its own code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BlockRejection {
    BadGenesis,
    BadVersion,
    BadHeight,
    BadLink,
    BadTimestamp,
    BadRound,
    EmptyBlock,
    BadRoot,
    BadTxOrder,
    BadSignature,
    WrongLeader,
    IllegalTx { index: usize, code: Rejection },
}

impl fmt::Display for BlockRejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlockRejection::IllegalTx { index, code } => write!(f, "IllegalTx(tx={index}, {code})"),
            other => fmt::Debug::fmt(other, f),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("block at height {height} rejected: {rejection}")]
pub struct ChainError {
    pub height: u64,
    pub rejection: BlockRejection,
}

/// Ledger and committed sequence numbers after some prefix of a chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainState {
    pub ledger: CreditLedger,
    pub seqs: SeqTracker,
}

impl ChainState {
    /// State after genesis.
    pub fn genesis(registry: &Registry) -> Result<Self, CreditError> {
        let ledger = apply_block(&initial_ledger(registry)?, &Block::genesis())?;
        Ok(Self { ledger, seqs: SeqTracker::new() })
    }

    pub fn advance(&self, block: &Block) -> Result<Self, CreditError> {
        let ledger = apply_block(&self.ledger, block)?;
        let mut seqs = self.seqs.clone();
        for tx in &block.transactions {
            seqs.record(tx.sender(), tx.body.seq);
        }
        Ok(Self { ledger, seqs })
    }
}

/// Inputs a validator needs besides the block and its parent.
#[derive(Debug, Clone, Copy)]
pub struct BlockContext<'a> {
    /// State as of the parent block.
    pub state: &'a ChainState,
    pub registry: &'a Registry,
    /// The validator's own qualified candidate set for the round, if it took
    /// part in it. Offline validation passes `None` and trusts the block's set.
    pub expected_candidates: Option<&'a BTreeSet<BiometricId>>,
}

pub fn validate_block(block: &Block, parent: &Block, ctx: &BlockContext<'_>) -> Result<(), BlockRejection> {
    let h = &block.header;
    let p = &parent.header;
    if h.version != PROTOCOL_VERSION {
        return Err(BlockRejection::BadVersion);
    }
    if h.height != p.height + 1 {
        return Err(BlockRejection::BadHeight);
    }
    if h.prev_hash != block_hash(p) {
        return Err(BlockRejection::BadLink);
    }
    if h.timestamp < p.timestamp {
        return Err(BlockRejection::BadTimestamp);
    }
    if h.nonce <= p.nonce {
        return Err(BlockRejection::BadRound);
    }
    if block.transactions.is_empty() {
        return Err(BlockRejection::EmptyBlock);
    }
    if h.merkle_root != transactions_root(&block.transactions) {
        return Err(BlockRejection::BadRoot);
    }
    let digests: Vec<Digest32> = block.transactions.iter().map(|t| t.digest()).collect();
    if digests.windows(2).any(|w| w[0] >= w[1]) {
        return Err(BlockRejection::BadTxOrder);
    }
    let Some(leader_key) = ctx.registry.public_key(&h.leader_id) else {
        return Err(BlockRejection::BadSignature);
    };
    if !verify(&leader_key, &block.seal_bytes(), &block.leader_signature) {
        return Err(BlockRejection::BadSignature);
    }
    check_election(block, ctx)?;

    let ledger = &ctx.state.ledger;
    let mut in_block = BTreeSet::new();
    for (index, tx) in block.transactions.iter().enumerate() {
        validate_message(tx, ledger, ctx.registry, h.nonce, &ctx.state.seqs)
            .map_err(|code| BlockRejection::IllegalTx { index, code })?;
        if !in_block.insert((tx.sender(), tx.body.seq)) {
            return Err(BlockRejection::IllegalTx { index, code: Rejection::Replay });
        }
    }
    Ok(())
}

fn check_election(block: &Block, ctx: &BlockContext<'_>) -> Result<(), BlockRejection> {
    let candidates = &block.candidates;
    if candidates.is_empty() || candidates.windows(2).any(|w| w[0] >= w[1]) {
        return Err(BlockRejection::WrongLeader);
    }
    if let Some(expected) = ctx.expected_candidates {
        if !candidates.iter().eq(expected.iter()) {
            return Err(BlockRejection::WrongLeader);
        }
    }
    match credit::leader(candidates, &ctx.state.ledger) {
        Ok(winner) if winner == block.header.leader_id => Ok(()),
        _ => Err(BlockRejection::WrongLeader),
    }
}

/// Ordered blocks from genesis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chain {
    blocks: Vec<Block>,
    head: Digest32,
}

impl Default for Chain {
    fn default() -> Self {
        Self::new()
    }
}

impl Chain {
    /// A chain holding only the genesis block.
    pub fn new() -> Self {
        let genesis = Block::genesis();
        Self { head: genesis.hash(), blocks: vec![genesis] }
    }

    /// Wraps blocks without validating them. `None` if `blocks` is empty.
    pub fn from_blocks(blocks: Vec<Block>) -> Option<Self> {
        let head = blocks.last()?.hash();
        Some(Self { blocks, head })
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn into_blocks(self) -> Vec<Block> {
        self.blocks
    }

    pub fn tip(&self) -> &Block {
        self.blocks.last().expect("chain is never empty")
    }

    pub fn head(&self) -> Digest32 {
        self.head
    }

    pub fn height(&self) -> u64 {
        self.tip().header.height
    }

    /// Appends without validation; callers validate first.
    pub fn push(&mut self, block: Block) {
        self.head = block.hash();
        self.blocks.push(block);
    }
}

/// Full structural and cryptographic validation from genesis. Returns the
/// state after the last block.
pub fn validate_chain(chain: &Chain, registry: &Registry) -> Result<ChainState, ChainError> {
    let blocks = chain.blocks();
    if blocks.first() != Some(&Block::genesis()) {
        return Err(ChainError { height: 0, rejection: BlockRejection::BadGenesis });
    }
    let mut state =
        ChainState::genesis(registry).map_err(|_| ChainError { height: 0, rejection: BlockRejection::BadGenesis })?;
    for pair in blocks.windows(2) {
        let (parent, block) = (&pair[0], &pair[1]);
        let ctx = BlockContext { state: &state, registry, expected_candidates: None };
        let height = block.header.height;
        validate_block(block, parent, &ctx).map_err(|rejection| ChainError { height, rejection })?;
        state = state.advance(block).map_err(|_| ChainError { height, rejection: BlockRejection::WrongLeader })?;
    }
    Ok(state)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ForkChoiceError {
    #[error("no candidate chains")]
    Empty,
    #[error("candidate {index} cannot be replayed: {source}")]
    Replay { index: usize, source: CreditError },
}

/// Sum over blocks of the leader's credit at the time it was elected.
pub fn election_weight(chain: &Chain, registry: &Registry) -> Result<u64, CreditError> {
    let mut ledger = initial_ledger(registry)?;
    let mut weight = 0u64;
    for block in chain.blocks() {
        if block.header.height > 0 {
            weight +=
                ledger.credit(&block.header.leader_id).ok_or(CreditError::UnknownLeader(block.header.leader_id))?;
        }
        ledger = apply_block(&ledger, block)?;
    }
    Ok(weight)
}

/// Highest chain; then highest election weight; then smallest head digest.
pub fn select_head<'a>(candidates: &'a [Chain], registry: &Registry) -> Result<&'a Chain, ForkChoiceError> {
    let mut scored = Vec::with_capacity(candidates.len());
    for (index, chain) in candidates.iter().enumerate() {
        let weight = election_weight(chain, registry).map_err(|source| ForkChoiceError::Replay { index, source })?;
        scored.push((chain.height(), weight, chain.head(), chain));
    }
    scored
        .into_iter()
        .max_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)).then_with(|| b.2.cmp(&a.2)).then(Ordering::Equal))
        .map(|(.., chain)| chain)
        .ok_or(ForkChoiceError::Empty)
}
