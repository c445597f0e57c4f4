use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::events::{EventKind, EventQueue, Payload};
use super::scenario::{AdversaryMode, Scenario, ScenarioError};
use crate::biometric::{enroll_fleet, BiometricError, Registry, ScramblingKey, Signer};
use crate::hash::double_sha256_parts;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Vehicle,
    Infrastructure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Behavior {
    Honest,
    Adversary(AdversaryMode),
}

#[derive(Debug, Clone)]
pub struct Node {
    pub id: usize,
    pub role: Role,
    pub behavior: Behavior,
    pub signer: Signer,
    /// Meters along the ring, in `[0, road_length)`.
    pub position: f64,
    /// m/s; zero for infrastructure.
    pub speed: f64,
    pub radio_range: f64,
    pub rng: ChaCha20Rng,
}

impl Node {
    pub fn is_honest(&self) -> bool {
        self.behavior == Behavior::Honest
    }
}

#[derive(Debug, thiserror::Error)]
pub enum WorldError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("enrollment failed: {0}")]
    Enrollment(BiometricError),
}

#[derive(Debug)]
pub struct World {
    pub scenario: Scenario,
    pub key: ScramblingKey,
    pub registry: Registry,
    pub nodes: Vec<Node>,
}

fn stream(tag: &[u8], seed: u64, index: u64) -> ChaCha20Rng {
    ChaCha20Rng::from_seed(double_sha256_parts(&[tag, &seed.to_be_bytes(), &index.to_be_bytes()]).0)
}

/// The node's private random stream, fixed by `(seed, node_id)`.
pub fn node_rng(seed: u64, node_id: usize) -> ChaCha20Rng {
    stream(b"bbc-node", seed, node_id as u64)
}

/// Shortest distance between two points on a ring of length `road`.
pub fn ring_distance(a: f64, b: f64, road: f64) -> f64 {
    let d = (a - b).abs();
    d.min(road - d)
}

/// Enrolls every node, places vehicles uniformly on the ring and spaces
/// infrastructure evenly.
pub fn build_world(scenario: &Scenario) -> Result<World, WorldError> {
    scenario.validate()?;
    let n = scenario.n_nodes();
    let fleet = enroll_fleet(scenario.seed, n, scenario.feature_dim).map_err(WorldError::Enrollment)?;
    let mut placement = stream(b"bbc-world", scenario.seed, 0);
    let mut nodes = Vec::with_capacity(n);
    for (id, member) in fleet.members.iter().enumerate() {
        let mut rng = node_rng(scenario.seed, id);
        let signer = member.present(&fleet.key, scenario.match_threshold, &mut rng).map_err(|e| ScenarioError {
            field: "match_threshold",
            reason: format!("node {id} cannot unlock its signer: {e}"),
        })?;
        let (role, position, speed) = if id < scenario.n_vehicles {
            let position = placement.random_range(0.0..scenario.road_length);
            let speed = if scenario.speed_max > scenario.speed_min {
                rng.random_range(scenario.speed_min..scenario.speed_max)
            } else {
                scenario.speed_min
            };
            (Role::Vehicle, position, speed)
        } else {
            let k = (id - scenario.n_vehicles) as f64;
            (Role::Infrastructure, k * scenario.road_length / scenario.n_infra as f64, 0.0)
        };
        let behavior =
            if scenario.is_adversary(id) { Behavior::Adversary(scenario.adversary_mode) } else { Behavior::Honest };
        nodes.push(Node { id, role, behavior, signer, position, speed, radio_range: scenario.radio_range, rng });
    }
    Ok(World { scenario: scenario.clone(), key: fleet.key, registry: fleet.registry, nodes })
}

impl World {
    /// Nodes other than `sender` within its radio range, ascending by id.
    pub fn neighbors(&self, sender: usize) -> Vec<usize> {
        let s = &self.nodes[sender];
        let road = self.scenario.road_length;
        self.nodes
            .iter()
            .filter(|n| n.id != sender && ring_distance(s.position, n.position, road) <= s.radio_range)
            .map(|n| n.id)
            .collect()
    }

    /// Schedules radio delivery of `payload` to every neighbor of `sender`.
    /// Latency and loss come from the sender's stream. Returns the receivers
    /// that will get it and the number of losses.
    pub fn broadcast(
        &mut self,
        queue: &mut EventQueue,
        round: u64,
        sender: usize,
        payload: Payload,
    ) -> (Vec<usize>, usize) {
        let (lo, hi) = (self.scenario.latency_min, self.scenario.latency_max);
        let loss = self.scenario.drop_probability;
        let mut delivered = Vec::new();
        let mut lost = 0;
        for to in self.neighbors(sender) {
            let rng = &mut self.nodes[sender].rng;
            let latency = rng.random_range(lo..=hi);
            if loss > 0.0 && rng.random::<f64>() < loss {
                lost += 1;
                continue;
            }
            queue.push(round, latency, EventKind::Deliver { from: sender, to, payload: payload.clone() });
            delivered.push(to);
        }
        (delivered, lost)
    }

    /// Advances every vehicle by one second of travel, wrapping on the ring.
    pub fn advance_positions(&mut self) {
        let road = self.scenario.road_length;
        for n in &mut self.nodes {
            if n.role == Role::Vehicle {
                n.position = (n.position + n.speed).rem_euclid(road);
                // rem_euclid can round up to exactly `road` for tiny negatives
                if n.position >= road {
                    n.position = 0.0;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::message::{MessageBody, V2xMessage};

    fn small(seed: u64) -> Scenario {
        Scenario { seed, n_vehicles: 6, n_infra: 2, feature_dim: 16, ..Default::default() }
    }

    #[test]
    fn enrolls_every_node() {
        let w = build_world(&Scenario { n_vehicles: 10, feature_dim: 16, ..Default::default() }).unwrap();
        assert_eq!(w.registry.len(), 12);
        let ids: std::collections::BTreeSet<_> = w.nodes.iter().map(|n| n.signer.biometric_id()).collect();
        assert_eq!(ids.len(), 12);
        assert_eq!(w.nodes.iter().filter(|n| n.role == Role::Vehicle).count(), 10);
        assert_eq!(w.nodes[10].position, 0.0);
        assert_eq!(w.nodes[11].position, 1000.0);
    }

    #[test]
    fn same_scenario_same_world() {
        let a = build_world(&small(3)).unwrap();
        let b = build_world(&small(3)).unwrap();
        assert_eq!(a.registry.to_text(), b.registry.to_text());
        let pa: Vec<_> = a.nodes.iter().map(|n| (n.position.to_bits(), n.speed.to_bits())).collect();
        let pb: Vec<_> = b.nodes.iter().map(|n| (n.position.to_bits(), n.speed.to_bits())).collect();
        assert_eq!(pa, pb);
    }

    #[test]
    fn positions_look_uniform() {
        // 400 vehicles in 4 bins; each bin should hold 100 +- 5 sigma
        let s = Scenario { n_vehicles: 400, n_infra: 0, feature_dim: 2, road_length: 1000.0, ..Default::default() };
        let w = build_world(&s).unwrap();
        let mut bins = [0usize; 4];
        for n in &w.nodes {
            assert!((0.0..1000.0).contains(&n.position));
            bins[(n.position / 250.0) as usize] += 1;
        }
        let sigma = (400.0f64 * 0.25 * 0.75).sqrt();
        for b in bins {
            assert!((b as f64 - 100.0).abs() < 5.0 * sigma, "{bins:?}");
        }
    }

    #[test]
    fn unlock_failure_names_threshold() {
        let err = build_world(&Scenario { match_threshold: 0.999, ..small(1) }).unwrap_err();
        assert!(matches!(err, WorldError::Scenario(ScenarioError { field: "match_threshold", .. })));
    }

    #[test]
    fn range_rules() {
        let mut w = build_world(&small(2)).unwrap();
        for n in &mut w.nodes {
            n.position = 1000.0;
        }
        w.nodes[0].position = 0.0;
        w.nodes[1].position = 50.0;
        w.nodes[2].position = 1950.0;
        assert_eq!(w.neighbors(0), vec![1, 2]);
        assert!(!w.neighbors(0).contains(&0));
        assert_eq!(ring_distance(0.0, 1000.0, 2000.0), 1000.0);
    }

    fn oracle_neighbors(w: &World, s: usize) -> Vec<usize> {
        let road = w.scenario.road_length;
        let mut out = Vec::new();
        for j in 0..w.nodes.len() {
            if j == s {
                continue;
            }
            let fwd = (w.nodes[j].position - w.nodes[s].position).rem_euclid(road);
            let back = (w.nodes[s].position - w.nodes[j].position).rem_euclid(road);
            if fwd <= w.nodes[s].radio_range || back <= w.nodes[s].radio_range {
                out.push(j);
            }
        }
        out
    }

    #[test]
    fn neighbors_match_pairwise_oracle_while_moving() {
        let mut w = build_world(&small(4)).unwrap();
        for _ in 0..200 {
            for s in 0..w.nodes.len() {
                assert_eq!(w.neighbors(s), oracle_neighbors(&w, s));
            }
            w.advance_positions();
        }
        assert!(w.nodes.iter().all(|n| (0.0..w.scenario.road_length).contains(&n.position)));
    }

    #[test]
    fn broadcast_latency_within_bounds() {
        let mut w = build_world(&Scenario { latency_min: 2, latency_max: 4, radio_range: 1000.0, ..small(5) }).unwrap();
        let mut q = EventQueue::new();
        let msg: V2xMessage =
            MessageBody::heartbeat(w.nodes[0].signer.biometric_id(), 1, 1, 1).sign(&w.nodes[0].signer.clone()).unwrap();
        let (to, lost) = w.broadcast(&mut q, 1, 0, Payload::Message(msg));
        assert_eq!(lost, 0);
        assert_eq!(to, (1..8).collect::<Vec<_>>());
        while let Some(e) = q.pop() {
            assert!((2..=4).contains(&e.time.tick));
        }
    }
}
