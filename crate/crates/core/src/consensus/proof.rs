use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::biometric::{verify, BiometricId, Registry, Signature, Signer};
use crate::hash::Digest32;

pub const DEFAULT_ACTIVITY_WINDOW: u64 = 5;

const PROOF_DOMAIN: &[u8] = b"bbc-pod";

/// Where and when an accepted message was first delivered.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeliveryRecord {
    pub sender: BiometricId,
    pub round: u64,
}

/// Digests of messages that at least one receiver accepted.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DeliveryIndex {
    by_digest: BTreeMap<Digest32, DeliveryRecord>,
    by_sender: BTreeMap<BiometricId, BTreeSet<(u64, Digest32)>>,
}

impl DeliveryIndex {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records the first delivery of `digest`; later ones are ignored.
    pub fn record(&mut self, digest: Digest32, sender: BiometricId, round: u64) {
        if self.by_digest.contains_key(&digest) {
            return;
        }
        self.by_digest.insert(digest, DeliveryRecord { sender, round });
        self.by_sender.entry(sender).or_default().insert((round, digest));
    }

    pub fn get(&self, digest: &Digest32) -> Option<DeliveryRecord> {
        self.by_digest.get(digest).copied()
    }

    pub fn len(&self) -> usize {
        self.by_digest.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_digest.is_empty()
    }

    /// Digests from `sender` delivered in rounds `(round - window, round]`,
    /// ascending.
    pub fn activity(&self, sender: &BiometricId, round: u64, window: u64) -> Vec<Digest32> {
        let Some(set) = self.by_sender.get(sender) else {
            return Vec::new();
        };
        let from = window_start(round, window);
        let mut out: Vec<Digest32> =
            set.range((from, Digest32::ZERO)..).take_while(|(r, _)| *r <= round).map(|(_, d)| *d).collect();
        out.sort();
        out
    }
}

fn window_start(round: u64, window: u64) -> u64 {
    (round + 1).saturating_sub(window)
}

fn in_window(delivered: u64, round: u64, window: u64) -> bool {
    delivered <= round && delivered >= window_start(round, window)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DrivingProof {
    pub subject: BiometricId,
    pub round: u64,
    /// Strictly ascending.
    pub activity_digests: Vec<Digest32>,
    pub signature: Signature,
}

impl DrivingProof {
    /// `"bbc-pod" || subject || round || count(u32) || digests`.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(PROOF_DOMAIN.len() + 44 + 32 * self.activity_digests.len());
        out.extend_from_slice(PROOF_DOMAIN);
        out.extend_from_slice(self.subject.as_bytes());
        out.extend_from_slice(&self.round.to_be_bytes());
        out.extend_from_slice(&(self.activity_digests.len() as u32).to_be_bytes());
        for d in &self.activity_digests {
            out.extend_from_slice(d.as_bytes());
        }
        out
    }
}

/// Signs the node's delivered activity for `round`, or `None` when it has
/// nothing delivered in the window.
pub fn make_driving_proof(signer: &Signer, round: u64, window: u64, index: &DeliveryIndex) -> Option<DrivingProof> {
    let activity_digests = index.activity(&signer.biometric_id(), round, window);
    if activity_digests.is_empty() {
        return None;
    }
    let mut proof =
        DrivingProof { subject: signer.biometric_id(), round, activity_digests, signature: Signature::EMPTY };
    proof.signature = signer.sign(&proof.canonical_bytes());
    Some(proof)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ProofRejection {
    NotEligible,
    BadSignature,
    WrongRound,
    NoActivity,
    UnsortedActivity,
    Undelivered(Digest32),
    NotSubjects(Digest32),
    OutsideWindow(Digest32),
    Duplicate,
}

impl fmt::Display for ProofRejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProofRejection::Undelivered(d) => write!(f, "Undelivered({})", &d.to_hex()[..12]),
            ProofRejection::NotSubjects(d) => write!(f, "NotSubjects({})", &d.to_hex()[..12]),
            ProofRejection::OutsideWindow(d) => write!(f, "OutsideWindow({})", &d.to_hex()[..12]),
            other => fmt::Debug::fmt(other, f),
        }
    }
}

/// Result of checking a round's proofs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qualification {
    pub candidates: BTreeSet<BiometricId>,
    pub dropped: Vec<(BiometricId, ProofRejection)>,
}

fn check_proof(
    proof: &DrivingProof,
    round: u64,
    window: u64,
    index: &DeliveryIndex,
    registry: &Registry,
    eligible: &BTreeSet<BiometricId>,
) -> Result<(), ProofRejection> {
    if !eligible.contains(&proof.subject) {
        return Err(ProofRejection::NotEligible);
    }
    let key = registry.public_key(&proof.subject).ok_or(ProofRejection::BadSignature)?;
    if !verify(&key, &proof.canonical_bytes(), &proof.signature) {
        return Err(ProofRejection::BadSignature);
    }
    if proof.round != round {
        return Err(ProofRejection::WrongRound);
    }
    if proof.activity_digests.is_empty() {
        return Err(ProofRejection::NoActivity);
    }
    if proof.activity_digests.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ProofRejection::UnsortedActivity);
    }
    for d in &proof.activity_digests {
        let rec = index.get(d).ok_or(ProofRejection::Undelivered(*d))?;
        if rec.sender != proof.subject {
            return Err(ProofRejection::NotSubjects(*d));
        }
        if !in_window(rec.round, round, window) {
            return Err(ProofRejection::OutsideWindow(*d));
        }
    }
    Ok(())
}

/// Candidates are the subjects of proofs that verify, are for `round`, and
/// cite only the subject's own deliveries inside the window. Only `eligible`
/// nodes may stand; a second proof from the same subject is dropped.
pub fn qualify(
    proofs: &[DrivingProof],
    round: u64,
    window: u64,
    index: &DeliveryIndex,
    registry: &Registry,
    eligible: &BTreeSet<BiometricId>,
) -> Qualification {
    let mut q = Qualification::default();
    for proof in proofs {
        let verdict = check_proof(proof, round, window, index, registry, eligible).and_then(|()| {
            if q.candidates.insert(proof.subject) {
                Ok(())
            } else {
                Err(ProofRejection::Duplicate)
            }
        });
        if let Err(reason) = verdict {
            log::debug!("round {round}: dropping proof from {}: {reason}", proof.subject.short());
            q.dropped.push((proof.subject, reason));
        }
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture::Fleet;
    use crate::hash::double_sha256;
    use proptest::prelude::*;

    fn digest(i: u64) -> Digest32 {
        double_sha256(&i.to_be_bytes())
    }

    fn world(n: usize) -> (Fleet, DeliveryIndex, BTreeSet<BiometricId>) {
        let fleet = Fleet::new(n, 11);
        let mut index = DeliveryIndex::new();
        for i in 0..n {
            for r in 1..=3u64 {
                index.record(digest(i as u64 * 100 + r), fleet.id(i), r);
            }
        }
        let eligible = fleet.registry().ids().collect();
        (fleet, index, eligible)
    }

    #[test]
    fn proof_lists_window_activity() {
        let (fleet, index, _) = world(2);
        let p = make_driving_proof(fleet.signer(0), 3, 5, &index).unwrap();
        assert_eq!(p.activity_digests.len(), 3);
        assert!(p.activity_digests.windows(2).all(|w| w[0] < w[1]));
        // window of 2 at round 3 covers rounds 2 and 3
        assert_eq!(make_driving_proof(fleet.signer(0), 3, 2, &index).unwrap().activity_digests.len(), 2);
        assert!(make_driving_proof(fleet.signer(0), 9, 5, &index).is_none());
    }

    #[test]
    fn idle_node_has_no_proof() {
        let (fleet, index, _) = world(2);
        let idle = Fleet::new(1, 12);
        assert!(make_driving_proof(idle.signer(0), 3, 5, &index).is_none());
        assert!(make_driving_proof(fleet.signer(1), 3, 5, &DeliveryIndex::new()).is_none());
    }

    #[test]
    fn first_delivery_wins() {
        let (fleet, mut index, _) = world(1);
        index.record(digest(1), fleet.id(0), 7);
        assert_eq!(index.get(&digest(1)).unwrap().round, 1);
        assert_eq!(index.len(), 3);
    }

    #[test]
    fn honest_proofs_all_qualify() {
        let (fleet, index, eligible) = world(4);
        let proofs: Vec<_> = (0..4).map(|i| make_driving_proof(fleet.signer(i), 3, 5, &index).unwrap()).collect();
        let q = qualify(&proofs, 3, 5, &index, fleet.registry(), &eligible);
        assert_eq!(q.candidates, eligible);
        assert!(q.dropped.is_empty());
    }

    #[test]
    fn bad_proofs_are_dropped_with_reason() {
        let (fleet, index, mut eligible) = world(3);
        let good = make_driving_proof(fleet.signer(0), 3, 5, &index).unwrap();
        let resign = |mut p: DrivingProof, i: usize| {
            p.signature = fleet.signer(i).sign(&p.canonical_bytes());
            p
        };
        let mut cites_unknown = good.clone();
        cites_unknown.activity_digests = vec![digest(999)];
        let cites_unknown = resign(cites_unknown, 0);
        let mut cites_other = good.clone();
        cites_other.activity_digests = vec![digest(101)];
        let cites_other = resign(cites_other, 0);
        let mut tampered = good.clone();
        tampered.round += 1;
        let stale = make_driving_proof(fleet.signer(1), 3, 5, &index).unwrap();

        let check = |p: &DrivingProof, eligible: &BTreeSet<BiometricId>| {
            qualify(std::slice::from_ref(p), 3, 5, &index, fleet.registry(), eligible).dropped
        };
        assert_eq!(check(&cites_unknown, &eligible), vec![(fleet.id(0), ProofRejection::Undelivered(digest(999)))]);
        assert_eq!(check(&cites_other, &eligible), vec![(fleet.id(0), ProofRejection::NotSubjects(digest(101)))]);
        assert_eq!(check(&tampered, &eligible)[0].1, ProofRejection::BadSignature);
        let q = qualify(std::slice::from_ref(&stale), 9, 5, &index, fleet.registry(), &eligible);
        assert_eq!(q.dropped[0].1, ProofRejection::WrongRound);
        let relabelled = resign(DrivingProof { round: 9, ..stale }, 1);
        let q = qualify(&[relabelled], 9, 5, &index, fleet.registry(), &eligible);
        assert!(matches!(q.dropped[0].1, ProofRejection::OutsideWindow(_)));

        let q = qualify(&[good.clone(), good.clone()], 3, 5, &index, fleet.registry(), &eligible);
        assert_eq!(q.candidates.len(), 1);
        assert_eq!(q.dropped, vec![(fleet.id(0), ProofRejection::Duplicate)]);

        eligible.remove(&fleet.id(0));
        assert_eq!(check(&good, &eligible)[0].1, ProofRejection::NotEligible);
    }

    // Independent re-check of a single proof, written from the rule text.
    fn oracle_ok(p: &DrivingProof, round: u64, window: u64, index: &DeliveryIndex, fleet: &Fleet) -> bool {
        let Some(i) = (0..fleet.signers().len()).find(|&i| fleet.id(i) == p.subject) else {
            return false;
        };
        let sig_ok = fleet.signer(i).sign(&p.canonical_bytes()) == p.signature;
        let lo = round as i64 - window as i64;
        sig_ok
            && p.round == round
            && !p.activity_digests.is_empty()
            && p.activity_digests.windows(2).all(|w| w[0] < w[1])
            && p.activity_digests.iter().all(|d| {
                index.get(d).is_some_and(|r| r.sender == p.subject && (r.round as i64) > lo && r.round <= round)
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn qualify_matches_per_proof_oracle(
            edits in proptest::collection::vec((0usize..4, 0u8..5), 1..8),
            round in 2u64..6,
        ) {
            let (fleet, index, eligible) = world(4);
            let mut proofs = Vec::new();
            for (who, edit) in edits {
                let Some(mut p) = make_driving_proof(fleet.signer(who), round, 3, &index) else { continue };
                match edit {
                    0 => {}
                    1 => p.signature.0[0] ^= 1,
                    2 => { p.activity_digests.push(digest(5000)); p.activity_digests.sort(); }
                    3 => p.activity_digests.push(digest(((who + 1) % 4) as u64 * 100 + 1)),
                    _ => p.round += 1,
                }
                if edit >= 2 {
                    p.signature = fleet.signer(who).sign(&p.canonical_bytes());
                }
                proofs.push(p);
            }
            let q = qualify(&proofs, round, 3, &index, fleet.registry(), &eligible);
            let mut expected = BTreeSet::new();
            for p in &proofs {
                if oracle_ok(p, round, 3, &index, &fleet) {
                    expected.insert(p.subject);
                }
            }
            prop_assert_eq!(q.candidates, expected);
        }
    }
}
