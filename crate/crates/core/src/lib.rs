//! Biometric-signed blockchain for vehicle data sharing.
//!
//! Blocks are hashed with double SHA-256 and sealed by a leader whose signing
//! key is unlocked by a biometric match performed on scrambled templates.
//! Leaders are elected by Proof-of-Driving: vehicles that proved recent
//! delivered traffic compete, and the one with the most chain-derived credit
//! wins. [`sim`] runs the whole protocol over a seeded ring-road VANET.

pub mod biometric;
pub mod block;
pub mod chain;
mod codec;
pub mod consensus;
pub mod credit;
pub mod fixture;
pub mod hash;
pub mod merkle;
pub mod message;
pub mod sim;
pub mod store;

pub use biometric::BiometricId;
pub use block::{Block, BlockHeader};
pub use chain::Chain;
pub use credit::CreditLedger;
pub use hash::{double_sha256, Digest32};
pub use message::V2xMessage;
