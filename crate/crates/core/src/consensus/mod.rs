//! Proof-of-Driving rounds.
//!
//! A vehicle stands for election by signing a list of its own messages that
//! were delivered during the last `W` rounds. Qualified candidates are ranked
//! by credit, the winner proposes a block, every validator votes, and the
//! block commits on a strict majority of online validators.

mod proof;
mod propose;
mod round;

pub use proof::{
    make_driving_proof, qualify, DeliveryIndex, DeliveryRecord, DrivingProof, ProofRejection, Qualification,
    DEFAULT_ACTIVITY_WINDOW,
};
pub use propose::{propose, Proposal};
pub use round::{commits, elect, Decision, Phase, RoundState, TransitionError, Vote, VoteError};
