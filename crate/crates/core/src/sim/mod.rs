//! Deterministic discrete-event VANET simulation.
//!
//! Vehicles drive around a ring road, exchange signed messages with whoever
//! is in radio range, and run Proof-of-Driving rounds over a lossless
//! consensus overlay. Infrastructure nodes validate and vote but never
//! stand for election.

mod adversary;
mod events;
mod replica;
mod run;
mod scenario;
mod world;

pub use adversary::adversary_act;
pub use events::{EventKind, EventQueue, Payload, SimEvent, SimTime};
pub use replica::Replica;
pub use run::{run, Metrics, NodeSummary, Receipt, RoundTrace, RunResult};
pub use scenario::{AdversaryMode, Scenario, ScenarioError, MAX_LATENCY};
pub use world::{build_world, node_rng, ring_distance, Behavior, Node, Role, World, WorldError};
