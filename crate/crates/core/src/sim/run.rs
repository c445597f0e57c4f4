use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io;
use std::path::Path;

use rand::Rng;

use super::adversary::adversary_act;
use super::events::{EventKind, EventQueue, Payload};
use super::replica::Replica;
use super::scenario::{AdversaryMode, Scenario};
use super::world::{build_world, Behavior, Node, Role, World, WorldError};
use crate::biometric::{BiometricId, Registry};
use crate::chain::{select_head, Chain};
use crate::consensus::{make_driving_proof, Decision, DeliveryIndex, Phase, ProofRejection};
use crate::credit::CreditLedger;
use crate::hash::Digest32;
use crate::message::{MessageBody, MessageKind, MessageType, Rejection, V2xMessage};
use crate::store::chain_to_text;

/// One radio delivery of a traffic message and the receiver's verdict.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Receipt {
    pub round: u64,
    pub tick: u64,
    /// Transmitting node; differs from the signer for replays.
    pub from: usize,
    pub to: usize,
    pub sender: BiometricId,
    pub seq: u64,
    pub digest: Digest32,
    pub verdict: Result<(), Rejection>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundTrace {
    pub round: u64,
    pub candidates: Vec<BiometricId>,
    pub leader: Option<BiometricId>,
    pub proposal: Option<Digest32>,
    pub accepts: usize,
    pub rejects: usize,
    pub online: usize,
    pub phase: Phase,
    pub height: u64,
}

impl RoundTrace {
    pub fn to_line(&self) -> String {
        let cands: Vec<String> = self.candidates.iter().map(BiometricId::short).collect();
        format!(
            "round {} candidates={}[{}] leader={} proposal={} votes={}/{}/{} phase={} height={}",
            self.round,
            self.candidates.len(),
            cands.join(","),
            self.leader.map_or("-".to_string(), |l| l.short()),
            self.proposal.map_or("-".to_string(), |p| p.to_hex()),
            self.accepts,
            self.rejects,
            self.online,
            self.phase,
            self.height,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSummary {
    pub id: usize,
    pub role: Role,
    pub behavior: Behavior,
    pub biometric_id: BiometricId,
    pub position: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Metrics {
    pub rounds: u64,
    pub candidate_rounds: u64,
    pub committed_rounds: u64,
    pub skipped_rounds: u64,
    pub heartbeat_blocks: u64,
    pub final_height: u64,
    pub head: Digest32,
    pub converged: bool,
    pub leader_counts: BTreeMap<BiometricId, u64>,
    pub messages_sent: u64,
    pub deliveries: u64,
    pub lost: u64,
    pub accepted: u64,
    pub rejected: BTreeMap<Rejection, u64>,
    pub proofs_sent: u64,
    pub proofs_dropped: u64,
    pub proposals_rejected: u64,
    pub votes_ignored: u64,
    pub ledger: CreditLedger,
}

impl Metrics {
    /// Committed rounds over rounds that had at least one candidate.
    pub fn commit_rate(&self) -> Option<f64> {
        (self.candidate_rounds > 0).then(|| self.committed_rounds as f64 / self.candidate_rounds as f64)
    }

    /// Largest share of committed blocks led by one identity.
    pub fn leader_concentration(&self) -> f64 {
        match self.leader_counts.values().max() {
            Some(&m) if self.committed_rounds > 0 => m as f64 / self.committed_rounds as f64,
            _ => 0.0,
        }
    }

    pub fn rejected_total(&self) -> u64 {
        self.rejected.values().sum()
    }

    /// Flat `key=value` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k}={v}");
        };
        kv("rounds", self.rounds.to_string());
        kv("candidate_rounds", self.candidate_rounds.to_string());
        kv("committed_rounds", self.committed_rounds.to_string());
        kv("skipped_rounds", self.skipped_rounds.to_string());
        kv("commit_rate", self.commit_rate().map_or("undefined".to_string(), |r| format!("{r:.6}")));
        kv("heartbeat_blocks", self.heartbeat_blocks.to_string());
        kv("final_height", self.final_height.to_string());
        kv("head", self.head.to_hex());
        kv("converged", self.converged.to_string());
        kv("leader_concentration", format!("{:.6}", self.leader_concentration()));
        kv("messages_sent", self.messages_sent.to_string());
        kv("deliveries", self.deliveries.to_string());
        kv("lost", self.lost.to_string());
        kv("accepted", self.accepted.to_string());
        kv("rejected", self.rejected_total().to_string());
        for code in Rejection::ALL {
            kv(&format!("rejected.{code}"), self.rejected.get(&code).copied().unwrap_or(0).to_string());
        }
        kv("proofs_sent", self.proofs_sent.to_string());
        kv("proofs_dropped", self.proofs_dropped.to_string());
        kv("proposals_rejected", self.proposals_rejected.to_string());
        kv("votes_ignored", self.votes_ignored.to_string());
        kv("credit_total", self.ledger.total().to_string());
        for (id, c) in self.ledger.credits() {
            kv(&format!("credit.{id}"), c.to_string());
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub scenario: Scenario,
    pub registry: Registry,
    pub nodes: Vec<NodeSummary>,
    /// Final committed chain of every node, by node id.
    pub chains: Vec<Chain>,
    pub ledgers: Vec<CreditLedger>,
    /// Index into `chains` of the fork-choice winner.
    pub selected: usize,
    /// Node whose view the traces record: the first honest node.
    pub observer: usize,
    pub traces: Vec<RoundTrace>,
    pub receipts: Vec<Receipt>,
    pub proof_drops: Vec<(u64, BiometricId, ProofRejection)>,
    pub metrics: Metrics,
}

impl RunResult {
    pub fn chain(&self) -> &Chain {
        &self.chains[self.selected]
    }

    pub fn ledger(&self) -> &CreditLedger {
        &self.ledgers[self.selected]
    }

    pub fn run_log(&self) -> String {
        let s = &self.scenario;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "scenario seed={} n_vehicles={} n_infra={} road_length={} radio_range={} rounds={} latency={}..{} \
             adversary_mode={} adversary_count={} inflate_by={} match_threshold={} activity_window={} \
             drop_probability={} feature_dim={} speed={}..{}",
            s.seed,
            s.n_vehicles,
            s.n_infra,
            s.road_length,
            s.radio_range,
            s.rounds,
            s.latency_min,
            s.latency_max,
            s.adversary_mode,
            s.adversary_count,
            s.inflate_by,
            s.match_threshold,
            s.activity_window,
            s.drop_probability,
            s.feature_dim,
            s.speed_min,
            s.speed_max,
        );
        for n in &self.nodes {
            let role = match n.role {
                Role::Vehicle => "vehicle",
                Role::Infrastructure => "infra",
            };
            let behavior = match n.behavior {
                Behavior::Honest => "honest".to_string(),
                Behavior::Adversary(m) => m.to_string(),
            };
            let _ = writeln!(
                out,
                "node {} role={role} behavior={behavior} id={} position={:.3} speed={:.3}",
                n.id, n.biometric_id, n.position, n.speed
            );
        }
        let mut receipts = self.receipts.iter().filter(|r| r.verdict.is_err()).peekable();
        let mut drops = self.proof_drops.iter().peekable();
        for t in &self.traces {
            let _ = writeln!(out, "{}", t.to_line());
            while let Some(r) = receipts.next_if(|r| r.round == t.round) {
                let code = r.verdict.unwrap_err();
                let _ = writeln!(
                    out,
                    "reject round={} tick={} from={} to={} sender={} seq={} code={code}",
                    r.round,
                    r.tick,
                    r.from,
                    r.to,
                    r.sender.short(),
                    r.seq
                );
            }
            while let Some((round, subject, reason)) = drops.next_if(|d| d.0 == t.round) {
                let _ = writeln!(out, "proof-drop round={round} subject={} reason={reason}", subject.short());
            }
        }
        out
    }

    /// Relative path and contents of every output file, sorted by path.
    pub fn output_files(&self) -> Vec<(String, String)> {
        let mut files = vec![
            ("chain.txt".to_string(), chain_to_text(self.chain())),
            ("metrics.txt".to_string(), self.metrics.to_text()),
            ("registry.txt".to_string(), self.registry.to_text()),
            ("run.log".to_string(), self.run_log()),
        ];
        let width = self.chains.len().saturating_sub(1).to_string().len().max(2);
        for (i, c) in self.chains.iter().enumerate() {
            files.push((format!("chains/node-{i:0width$}.txt"), chain_to_text(c)));
        }
        files.sort();
        files
    }

    pub fn write_to(&self, dir: &Path) -> io::Result<()> {
        std::fs::create_dir_all(dir.join("chains"))?;
        for (rel, text) in self.output_files() {
            std::fs::write(dir.join(rel), text)?;
        }
        Ok(())
    }
}

struct Ticks {
    proofs: u64,
    proof_delivery: u64,
    election: u64,
    proposal_delivery: u64,
    vote_delivery: u64,
    timeout: u64,
    movement: u64,
}

impl Ticks {
    fn new(latency_max: u64) -> Self {
        let l = latency_max;
        Self {
            proofs: l + 1,
            proof_delivery: l + 2,
            election: l + 3,
            proposal_delivery: l + 4,
            vote_delivery: l + 5,
            timeout: l + 6,
            movement: l + 7,
        }
    }
}

const VEHICLE_TYPES: [MessageType; 3] =
    [MessageType::SafetyAlert, MessageType::TrafficInfo, MessageType::ServiceRequest];

fn honest_traffic(node: &mut Node, replica: &mut Replica, round: u64) -> V2xMessage {
    let (kind, msg_type) = match node.role {
        Role::Vehicle => (MessageKind::V2V, VEHICLE_TYPES[node.rng.random_range(0..VEHICLE_TYPES.len())]),
        Role::Infrastructure => (MessageKind::V2I, MessageType::TrafficInfo),
    };
    let mut payload = format!("node={} round={round} pos={:.1} ", node.id, node.position).into_bytes();
    let extra = node.rng.random_range(8..=32);
    payload.extend((0..extra).map(|_| node.rng.random::<u8>()));
    let credit = replica.state().ledger.credit(&node.signer.biometric_id()).unwrap_or_default();
    MessageBody {
        kind,
        msg_type,
        payload,
        sender_id: node.signer.biometric_id(),
        credit_claim: credit,
        seq: replica.take_seq(),
        timestamp: round,
    }
    .sign(&node.signer)
    .expect("payload fits")
}

struct Sim {
    world: World,
    replicas: Vec<Replica>,
    queue: EventQueue,
    index: DeliveryIndex,
    eligible: BTreeSet<BiometricId>,
    ticks: Ticks,
    observer: usize,
    traces: Vec<RoundTrace>,
    receipts: Vec<Receipt>,
    proof_drops: Vec<(u64, BiometricId, ProofRejection)>,
    m: Counters,
}

#[derive(Default)]
struct Counters {
    candidate_rounds: u64,
    committed_rounds: u64,
    skipped_rounds: u64,
    heartbeat_blocks: u64,
    messages_sent: u64,
    deliveries: u64,
    lost: u64,
    accepted: u64,
    rejected: BTreeMap<Rejection, u64>,
    proofs_sent: u64,
    proposals_rejected: u64,
    votes_ignored: u64,
    leader_counts: BTreeMap<BiometricId, u64>,
}

impl Sim {
    fn n(&self) -> usize {
        self.world.nodes.len()
    }

    fn is_dropper(&self, i: usize) -> bool {
        self.world.nodes[i].behavior == Behavior::Adversary(AdversaryMode::Drop)
    }

    fn send(&mut self, round: u64, from: usize, msg: V2xMessage) {
        self.m.messages_sent += 1;
        let (to, lost) = self.world.broadcast(&mut self.queue, round, from, Payload::Message(msg));
        self.m.deliveries += to.len() as u64;
        self.m.lost += lost as u64;
    }

    /// Consensus traffic reaches every node, itself included, at `tick`.
    fn overlay(&mut self, round: u64, tick: u64, from: usize, payload: Payload) {
        for to in 0..self.n() {
            self.queue.push(round, tick, EventKind::Deliver { from, to, payload: payload.clone() });
        }
    }

    fn round_start(&mut self, round: u64) {
        for r in &mut self.replicas {
            r.begin_round(round);
        }
        for i in 0..self.n() {
            let node = &mut self.world.nodes[i];
            let replica = &mut self.replicas[i];
            let out = match node.behavior {
                Behavior::Honest => {
                    let msg = honest_traffic(node, replica, round);
                    replica.record_own(&msg);
                    vec![msg]
                }
                Behavior::Adversary(_) => adversary_act(node, replica, round, self.world.scenario.inflate_by),
            };
            for msg in out {
                self.send(round, i, msg);
            }
        }
    }

    fn deliver(&mut self, round: u64, tick: u64, from: usize, to: usize, payload: Payload) {
        let registry = &self.world.registry;
        match payload {
            Payload::Message(msg) => {
                let verdict = self.replicas[to].receive_message(&msg, registry);
                if self.world.nodes[to].behavior == Behavior::Adversary(AdversaryMode::Replay) {
                    self.replicas[to].capture(&msg);
                }
                match verdict {
                    Ok(()) => {
                        self.m.accepted += 1;
                        self.index.record(msg.digest(), msg.sender(), round);
                    }
                    Err(code) => *self.m.rejected.entry(code).or_default() += 1,
                }
                self.receipts.push(Receipt {
                    round,
                    tick,
                    from,
                    to,
                    sender: msg.sender(),
                    seq: msg.body.seq,
                    digest: msg.digest(),
                    verdict,
                });
            }
            Payload::Proof(p) => self.replicas[to].receive_proof(p),
            Payload::Proposal(block) => {
                let decision = match self.replicas[to].check_proposal(&block, registry) {
                    Ok(()) => Decision::Accept,
                    Err(why) => {
                        log::debug!("round {round}: node {to} rejects proposal: {why}");
                        self.m.proposals_rejected += 1;
                        Decision::Reject
                    }
                };
                // droppers follow the chain but withhold their vote
                if self.is_dropper(to) {
                    return;
                }
                let vote = self.replicas[to].vote(&self.world.nodes[to].signer, &block, decision);
                self.overlay(round, self.ticks.vote_delivery, to, Payload::Vote(vote));
            }
            Payload::Vote(v) => {
                let online = self.n();
                if let Err(e) = self.replicas[to].receive_vote(&v, registry, online) {
                    log::debug!("round {round}: node {to} ignores vote from {}: {e}", v.voter.short());
                    self.m.votes_ignored += 1;
                }
            }
        }
    }

    fn proof_phase(&mut self, round: u64) {
        let window = self.world.scenario.activity_window;
        for i in 0..self.n() {
            if self.world.nodes[i].role != Role::Vehicle || self.is_dropper(i) {
                continue;
            }
            if let Some(p) = make_driving_proof(&self.world.nodes[i].signer, round, window, &self.index) {
                self.m.proofs_sent += 1;
                self.overlay(round, self.ticks.proof_delivery, i, Payload::Proof(p));
            }
        }
    }

    fn election(&mut self, round: u64) {
        let window = self.world.scenario.activity_window;
        for i in 0..self.n() {
            let (q, leader) = self.replicas[i].elect(window, &self.index, &self.world.registry, &self.eligible);
            if i == self.observer {
                self.proof_drops.extend(q.dropped.iter().map(|(s, why)| (round, *s, *why)));
            }
            let node = &self.world.nodes[i];
            if leader == Some(node.signer.biometric_id()) && !self.is_dropper(i) {
                let p = self.replicas[i].propose(&node.signer, &self.world.registry);
                if p.heartbeat {
                    self.m.heartbeat_blocks += 1;
                }
                self.overlay(round, self.ticks.proposal_delivery, i, Payload::Proposal(p.block));
            }
        }
    }

    fn timeout(&mut self, round: u64) {
        for r in &mut self.replicas {
            r.timeout();
        }
        let view = &self.replicas[self.observer];
        let st = view.round();
        let (accepts, rejects) = st.tally();
        if !st.candidates.is_empty() {
            self.m.candidate_rounds += 1;
        }
        match st.phase {
            Phase::Committed => {
                self.m.committed_rounds += 1;
                if let Some(l) = st.leader {
                    *self.m.leader_counts.entry(l).or_default() += 1;
                }
            }
            _ => self.m.skipped_rounds += 1,
        }
        self.traces.push(RoundTrace {
            round,
            candidates: st.candidates.iter().copied().collect(),
            leader: st.leader,
            proposal: st.proposal_hash(),
            accepts,
            rejects,
            online: self.world.nodes.len(),
            phase: st.phase,
            height: view.chain().height(),
        });
    }
}

/// Runs a scenario to completion. Everything is derived from the scenario
/// seed, so equal scenarios give equal results.
pub fn run(scenario: &Scenario) -> Result<RunResult, WorldError> {
    let world = build_world(scenario)?;
    let nodes: Vec<NodeSummary> = world
        .nodes
        .iter()
        .map(|n| NodeSummary {
            id: n.id,
            role: n.role,
            behavior: n.behavior,
            biometric_id: n.signer.biometric_id(),
            position: n.position,
            speed: n.speed,
        })
        .collect();
    let eligible = world.nodes.iter().filter(|n| n.role == Role::Vehicle).map(|n| n.signer.biometric_id()).collect();
    let observer = world.nodes.iter().position(Node::is_honest).unwrap_or(0);
    let replicas = vec![Replica::new(&world.registry); world.nodes.len()];
    let mut sim = Sim {
        ticks: Ticks::new(scenario.latency_max),
        world,
        replicas,
        queue: EventQueue::new(),
        index: DeliveryIndex::new(),
        eligible,
        observer,
        traces: Vec::new(),
        receipts: Vec::new(),
        proof_drops: Vec::new(),
        m: Counters::default(),
    };
    for round in 1..=scenario.rounds {
        sim.queue.push(round, 0, EventKind::RoundStart);
        sim.queue.push(round, sim.ticks.proofs, EventKind::ProofPhase);
        sim.queue.push(round, sim.ticks.election, EventKind::Election);
        sim.queue.push(round, sim.ticks.timeout, EventKind::RoundTimeout);
        sim.queue.push(round, sim.ticks.movement, EventKind::Move);
    }
    while let Some(ev) = sim.queue.pop() {
        let round = ev.time.round;
        match ev.kind {
            EventKind::RoundStart => sim.round_start(round),
            EventKind::Deliver { from, to, payload } => sim.deliver(round, ev.time.tick, from, to, payload),
            EventKind::ProofPhase => sim.proof_phase(round),
            EventKind::Election => sim.election(round),
            EventKind::RoundTimeout => sim.timeout(round),
            EventKind::Move => sim.world.advance_positions(),
        }
    }

    let chains: Vec<Chain> = sim.replicas.iter().map(|r| r.chain().clone()).collect();
    let ledgers: Vec<CreditLedger> = sim.replicas.iter().map(|r| r.state().ledger.clone()).collect();
    let head = select_head(&chains, &sim.world.registry).expect("every chain replays");
    let selected = chains.iter().position(|c| c.head() == head.head()).expect("head is one of the chains");
    let converged = chains.iter().all(|c| c.head() == head.head());
    let c = sim.m;
    let metrics = Metrics {
        rounds: scenario.rounds,
        candidate_rounds: c.candidate_rounds,
        committed_rounds: c.committed_rounds,
        skipped_rounds: c.skipped_rounds,
        heartbeat_blocks: c.heartbeat_blocks,
        final_height: head.height(),
        head: head.head(),
        converged,
        leader_counts: c.leader_counts,
        messages_sent: c.messages_sent,
        deliveries: c.deliveries,
        lost: c.lost,
        accepted: c.accepted,
        rejected: c.rejected,
        proofs_sent: c.proofs_sent,
        proofs_dropped: sim.proof_drops.len() as u64,
        proposals_rejected: c.proposals_rejected,
        votes_ignored: c.votes_ignored,
        ledger: ledgers[selected].clone(),
    };
    Ok(RunResult {
        scenario: scenario.clone(),
        registry: sim.world.registry,
        nodes,
        chains,
        ledgers,
        selected,
        observer,
        traces: sim.traces,
        receipts: sim.receipts,
        proof_drops: sim.proof_drops,
        metrics,
    })
}
