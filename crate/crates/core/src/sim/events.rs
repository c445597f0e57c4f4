use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use crate::block::Block;
use crate::consensus::{DrivingProof, Vote};
use crate::message::V2xMessage;

/// Logical time. Ticks order events inside a round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SimTime {
    pub round: u64,
    pub tick: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    Message(V2xMessage),
    Proof(DrivingProof),
    Proposal(Block),
    Vote(Vote),
}

#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventKind {
    RoundStart,
    Deliver { from: usize, to: usize, payload: Payload },
    ProofPhase,
    Election,
    RoundTimeout,
    Move,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimEvent {
    pub time: SimTime,
    /// Insertion order; breaks ties between events at the same time.
    pub seq: u64,
    pub kind: EventKind,
}

impl Ord for SimEvent {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.time, self.seq).cmp(&(other.time, other.seq))
    }
}

impl PartialOrd for SimEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Min-queue over `(round, tick, insertion sequence)`.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Reverse<SimEvent>>,
    next_seq: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, round: u64, tick: u64, kind: EventKind) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Reverse(SimEvent { time: SimTime { round, tick }, seq, kind }));
    }

    pub fn pop(&mut self) -> Option<SimEvent> {
        self.heap.pop().map(|Reverse(e)| e)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}
