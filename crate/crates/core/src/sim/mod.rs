//! Deterministic discrete-event network simulator.
//!
//! Time is in integer microseconds. Round `j` starts at `(j - 1) / rate`
//! seconds; the aggregator finalizes at start plus the deadline and
//! broadcasts. Events at equal times run in the order round start, packet
//! arrival, deadline, broadcast arrival, then in scheduling order.

pub mod adversary;
pub mod channel;
pub mod config;
pub mod engine;
pub mod trace;
pub mod traffic;

use thiserror::Error;

pub use adversary::Strategy;
pub use channel::{gilbert_elliott_step, GeParams, GeState, LatencyModel, LossModel};
pub use config::{AdversarySpec, GroupChoice, Rotation, SimConfig, Speakers};
pub use engine::{rotate_aggregator, run_simulation, SimOutput};
pub use trace::{Outcome, RoundTrace};
pub use traffic::{simulate_traffic, traffic_from_traces, NodeTraffic, TrafficConfig};

use crate::protocol::PlayerError;
use crate::setup::SetupError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("scenario does not match setup: {0}")]
    ConfigMismatch(String),
    #[error(transparent)]
    Setup(#[from] SetupError),
    #[error(transparent)]
    Player(#[from] PlayerError),
}
