use std::fmt;
use std::str::FromStr;

use crate::biometric::{DEFAULT_DIM, DEFAULT_MATCH_THRESHOLD};
use crate::consensus::DEFAULT_ACTIVITY_WINDOW;

/// Upper bound on per-hop latency, in ticks.
pub const MAX_LATENCY: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum AdversaryMode {
    #[default]
    None,
    ForgeSignature,
    InflateClaim,
    Replay,
    Drop,
}

impl AdversaryMode {
    pub const ALL: [AdversaryMode; 5] = [
        AdversaryMode::None,
        AdversaryMode::ForgeSignature,
        AdversaryMode::InflateClaim,
        AdversaryMode::Replay,
        AdversaryMode::Drop,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AdversaryMode::None => "none",
            AdversaryMode::ForgeSignature => "forge_signature",
            AdversaryMode::InflateClaim => "inflate_claim",
            AdversaryMode::Replay => "replay",
            AdversaryMode::Drop => "drop",
        }
    }
}

impl fmt::Display for AdversaryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AdversaryMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| {
            let names: Vec<_> = Self::ALL.iter().map(|m| m.name()).collect();
            format!("unknown mode {s:?}, expected one of {}", names.join(", "))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid {field}: {reason}")]
pub struct ScenarioError {
    pub field: &'static str,
    pub reason: String,
}

fn bad(field: &'static str, reason: impl Into<String>) -> ScenarioError {
    ScenarioError { field, reason: reason.into() }
}

/// Everything a run depends on. Vehicles take node ids `0..n_vehicles`,
/// infrastructure the ids after them; adversaries are the highest-numbered
/// vehicles.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub seed: u64,
    pub n_vehicles: usize,
    pub n_infra: usize,
    /// Ring circumference, meters.
    pub road_length: f64,
    /// Meters, same for every node.
    pub radio_range: f64,
    pub rounds: u64,
    pub latency_min: u64,
    pub latency_max: u64,
    pub adversary_mode: AdversaryMode,
    pub adversary_count: usize,
    /// Added to the true credit by `InflateClaim` adversaries.
    pub inflate_by: u64,
    pub match_threshold: f64,
    /// Proof-of-Driving window `W`, rounds.
    pub activity_window: u64,
    /// Per-delivery loss on the radio channel.
    pub drop_probability: f64,
    pub feature_dim: usize,
    /// m/s; one round lasts one second.
    pub speed_min: f64,
    pub speed_max: f64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            seed: 1,
            n_vehicles: 10,
            n_infra: 2,
            road_length: 2000.0,
            radio_range: 300.0,
            rounds: 50,
            latency_min: 1,
            latency_max: 3,
            adversary_mode: AdversaryMode::None,
            adversary_count: 0,
            inflate_by: 1,
            match_threshold: DEFAULT_MATCH_THRESHOLD,
            activity_window: DEFAULT_ACTIVITY_WINDOW,
            drop_probability: 0.0,
            feature_dim: DEFAULT_DIM,
            speed_min: 10.0,
            speed_max: 30.0,
        }
    }
}

fn positive(field: &'static str, v: f64) -> Result<(), ScenarioError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(bad(field, format!("must be a positive finite number, got {v}")))
    }
}

impl Scenario {
    pub fn n_nodes(&self) -> usize {
        self.n_vehicles + self.n_infra
    }

    pub fn is_adversary(&self, node: usize) -> bool {
        self.adversary_mode != AdversaryMode::None
            && node < self.n_vehicles
            && node >= self.n_vehicles - self.adversary_count
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.n_vehicles == 0 {
            return Err(bad("n_vehicles", "must be at least 1"));
        }
        positive("road_length", self.road_length)?;
        positive("radio_range", self.radio_range)?;
        if self.rounds == 0 {
            return Err(bad("rounds", "must be at least 1"));
        }
        if self.latency_min == 0 {
            return Err(bad("latency_min", "must be at least 1 tick"));
        }
        if self.latency_max < self.latency_min || self.latency_max > MAX_LATENCY {
            return Err(bad(
                "latency_max",
                format!("must lie in [latency_min, {MAX_LATENCY}], got {}", self.latency_max),
            ));
        }
        match self.adversary_mode {
            AdversaryMode::None if self.adversary_count > 0 => {
                return Err(bad("adversary_count", "must be 0 when adversary_mode is none"));
            }
            _ if self.adversary_count > self.n_vehicles => {
                return Err(bad(
                    "adversary_count",
                    format!("{} exceeds n_vehicles = {}", self.adversary_count, self.n_vehicles),
                ));
            }
            _ => {}
        }
        if self.inflate_by == 0 {
            return Err(bad("inflate_by", "must be at least 1"));
        }
        if !(self.match_threshold > 0.0 && self.match_threshold <= 1.0) {
            return Err(bad("match_threshold", format!("must lie in (0, 1], got {}", self.match_threshold)));
        }
        if self.activity_window == 0 {
            return Err(bad("activity_window", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.drop_probability) {
            return Err(bad("drop_probability", format!("must lie in [0, 1), got {}", self.drop_probability)));
        }
        if self.feature_dim < 2 {
            return Err(bad("feature_dim", "must be at least 2"));
        }
        if !(self.speed_min.is_finite() && self.speed_min >= 0.0) {
            return Err(bad("speed_min", format!("must be a non-negative finite number, got {}", self.speed_min)));
        }
        if !(self.speed_max.is_finite() && self.speed_max >= self.speed_min) {
            return Err(bad("speed_max", format!("must be finite and at least speed_min, got {}", self.speed_max)));
        }
        Ok(())
    }
}
