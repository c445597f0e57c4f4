//! Credit ledger derived purely from chain replay.
//!
//! Every enrollee starts at one credit and each committed block rewards its
//! leader with one more. Nothing else changes a balance.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::biometric::{BiometricId, Registry};
use crate::block::Block;
use crate::chain::{validate_chain, Chain, ChainError};

pub const INITIAL_CREDIT: u64 = 1;
pub const LEADER_REWARD: u64 = 1;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CreditError {
    #[error("registry is empty")]
    EmptyRegistry,
    #[error("ledger is at height {ledger}, block is at height {block}")]
    HeightMismatch { ledger: i64, block: u64 },
    #[error("leader {0} has no ledger entry")]
    UnknownLeader(BiometricId),
    #[error("candidate {0} has no ledger entry")]
    UnknownCandidate(BiometricId),
    #[error("no candidates")]
    NoCandidates,
    #[error(transparent)]
    InvalidChain(#[from] ChainError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CreditLedger {
    credits: BTreeMap<BiometricId, u64>,
    /// Height of the last applied block; -1 before genesis.
    as_of_height: i64,
}

impl CreditLedger {
    /// A ledger snapshot with explicit balances.
    pub fn from_credits(credits: BTreeMap<BiometricId, u64>, as_of_height: i64) -> Self {
        Self { credits, as_of_height }
    }

    pub fn credit(&self, id: &BiometricId) -> Option<u64> {
        self.credits.get(id).copied()
    }

    pub fn as_of_height(&self) -> i64 {
        self.as_of_height
    }

    pub fn credits(&self) -> &BTreeMap<BiometricId, u64> {
        &self.credits
    }

    pub fn total(&self) -> u64 {
        self.credits.values().sum()
    }

    /// `hex_id credit` lines in id order.
    pub fn table(&self) -> String {
        self.credits.iter().map(|(id, c)| format!("{id} {c}\n")).collect()
    }
}

pub fn initial_ledger(registry: &Registry) -> Result<CreditLedger, CreditError> {
    if registry.is_empty() {
        return Err(CreditError::EmptyRegistry);
    }
    Ok(CreditLedger { credits: registry.ids().map(|id| (id, INITIAL_CREDIT)).collect(), as_of_height: -1 })
}

/// Returns the ledger after `block`. Genesis advances the height only.
pub fn apply_block(ledger: &CreditLedger, block: &Block) -> Result<CreditLedger, CreditError> {
    let height = block.header.height;
    if ledger.as_of_height + 1 != height as i64 {
        return Err(CreditError::HeightMismatch { ledger: ledger.as_of_height, block: height });
    }
    let mut next = ledger.clone();
    next.as_of_height = height as i64;
    if height > 0 {
        let leader = block.header.leader_id;
        let entry = next.credits.get_mut(&leader).ok_or(CreditError::UnknownLeader(leader))?;
        *entry += LEADER_REWARD;
    }
    Ok(next)
}

/// The candidate with the most credit; ties go to the smallest id bytes.
pub fn leader<'a, I>(candidates: I, ledger: &CreditLedger) -> Result<BiometricId, CreditError>
where
    I: IntoIterator<Item = &'a BiometricId>,
{
    let mut best: Option<(u64, BiometricId)> = None;
    for id in candidates {
        let credit = ledger.credit(id).ok_or(CreditError::UnknownCandidate(*id))?;
        best = match best {
            Some((c, b)) if c > credit || (c == credit && b <= *id) => Some((c, b)),
            _ => Some((credit, *id)),
        };
    }
    best.map(|(_, id)| id).ok_or(CreditError::NoCandidates)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CreditEventKind {
    Enroll,
    LeaderReward,
}

/// Ordered by (height, kind, subject).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct CreditEvent {
    pub height: u64,
    pub kind: CreditEventKind,
    pub subject: BiometricId,
    pub delta: i64,
}

impl fmt::Display for CreditEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            CreditEventKind::Enroll => "Enroll",
            CreditEventKind::LeaderReward => "LeaderReward",
        };
        write!(f, "height={} kind={kind} subject={} delta={:+}", self.height, self.subject, self.delta)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditReport {
    pub ledger: CreditLedger,
    pub events: Vec<CreditEvent>,
}

impl AuditReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("events {}\n", self.events.len()));
        for e in &self.events {
            out.push_str(&format!("event {e}\n"));
        }
        out.push_str(&format!("credits {} height={}\n", self.ledger.credits.len(), self.ledger.as_of_height));
        for (id, c) in &self.ledger.credits {
            out.push_str(&format!("credit {id} {c}\n"));
        }
        out
    }
}

/// Validates `chain` and derives the ledger together with the full event log.
pub fn audit(chain: &Chain, registry: &Registry) -> Result<AuditReport, CreditError> {
    let state = validate_chain(chain, registry)?;
    let mut events: Vec<CreditEvent> = registry
        .ids()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .map(|subject| CreditEvent { height: 0, kind: CreditEventKind::Enroll, subject, delta: INITIAL_CREDIT as i64 })
        .collect();
    events.extend(chain.blocks().iter().skip(1).map(|b| CreditEvent {
        height: b.header.height,
        kind: CreditEventKind::LeaderReward,
        subject: b.header.leader_id,
        delta: LEADER_REWARD as i64,
    }));
    events.sort();
    Ok(AuditReport { ledger: state.ledger, events })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture::Fleet;

    #[test]
    fn initial_ledger_gives_one_each() {
        let fleet = Fleet::new(3, 1);
        let l = initial_ledger(fleet.registry()).unwrap();
        assert_eq!(l.credits().len(), 3);
        assert!(l.credits().values().all(|&c| c == 1));
        assert_eq!(l.as_of_height(), -1);
        assert_eq!(l, initial_ledger(fleet.registry()).unwrap());
    }

    #[test]
    fn single_candidate_and_tie_break() {
        let fleet = Fleet::new(3, 2);
        let mut l = initial_ledger(fleet.registry()).unwrap();
        let mut ids: Vec<_> = fleet.registry().ids().collect();
        ids.sort();
        let (a, b, c) = (ids[0], ids[1], ids[2]);
        assert_eq!(leader([&c], &l).unwrap(), c);
        // A:3, B:5, C:5 with B < C
        *l.credits.get_mut(&a).unwrap() = 3;
        *l.credits.get_mut(&b).unwrap() = 5;
        *l.credits.get_mut(&c).unwrap() = 5;
        assert_eq!(leader([&c, &a, &b], &l).unwrap(), b);
        assert_eq!(leader(std::iter::empty(), &l), Err(CreditError::NoCandidates));
        let outsider = Fleet::new(1, 99).id(0);
        assert_eq!(leader([&outsider], &l), Err(CreditError::UnknownCandidate(outsider)));
    }

    #[test]
    fn apply_block_rewards_leader_only() {
        let fleet = Fleet::new(3, 3);
        let chain = fleet.chain_with_leaders(&[0, 0, 0, 1]);
        let mut ledger = initial_ledger(fleet.registry()).unwrap();
        for b in chain.blocks() {
            ledger = apply_block(&ledger, b).unwrap();
        }
        assert_eq!(ledger.credit(&fleet.id(0)), Some(4));
        assert_eq!(ledger.credit(&fleet.id(1)), Some(2));
        assert_eq!(ledger.credit(&fleet.id(2)), Some(1));
        assert_eq!(ledger.as_of_height(), 4);

        // leader at 4 goes to 5 after another win
        let next = fleet.chain_with_leaders(&[0, 0, 0, 1, 0]);
        let after = apply_block(&ledger, &next.blocks()[5]).unwrap();
        assert_eq!(after.credit(&fleet.id(0)), Some(5));
        assert_eq!(after.credit(&fleet.id(1)), Some(2));
        // input untouched
        assert_eq!(ledger.credit(&fleet.id(0)), Some(4));
    }

    #[test]
    fn apply_block_errors() {
        let fleet = Fleet::new(2, 4);
        let chain = fleet.chain_with_leaders(&[0, 1]);
        let l0 = initial_ledger(fleet.registry()).unwrap();
        assert_eq!(apply_block(&l0, &chain.blocks()[2]), Err(CreditError::HeightMismatch { ledger: -1, block: 2 }));
        let other = Fleet::new(2, 5);
        let foreign = initial_ledger(other.registry()).unwrap();
        let foreign = apply_block(&foreign, &chain.blocks()[0]).unwrap();
        assert!(matches!(apply_block(&foreign, &chain.blocks()[1]), Err(CreditError::UnknownLeader(_))));
    }

    #[test]
    fn audit_genesis_only_is_initial() {
        let fleet = Fleet::new(3, 6);
        let report = audit(&Chain::new(), fleet.registry()).unwrap();
        assert_eq!(report.ledger.credits(), initial_ledger(fleet.registry()).unwrap().credits());
        assert_eq!(report.events.len(), 3);
    }

    #[test]
    fn audit_counts_and_conservation() {
        let fleet = Fleet::new(4, 7);
        let leaders = [0, 1, 1, 2, 3, 0, 0];
        let chain = fleet.chain_with_leaders(&leaders);
        let report = audit(&chain, fleet.registry()).unwrap();
        assert_eq!(report.events.len(), 4 + leaders.len());
        assert_eq!(report.ledger.total(), 4 + leaders.len() as u64);
        let mut sorted = report.events.clone();
        sorted.sort();
        assert_eq!(sorted, report.events);
    }
}
