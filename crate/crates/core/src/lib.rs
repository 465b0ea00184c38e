//! Untraceable two-party streaming inside a group of `n` players, built on a
//! dining-cryptographers net with a central (or rotating) aggregator.
//!
//! Each round every player sends one opening to the aggregator, which sums
//! the openings it accepted and broadcasts `(L, X)`. Bystanders open their
//! round pad honestly; the two correspondents hide a message in theirs. Four
//! progressively hardened protocol levels are supported:
//!
//! 1. zero-sum pads, no loss tolerated;
//! 2. the broadcast carries the received set `L` so correspondents subtract
//!    exactly the pads that were summed;
//! 3. every opening is checked against a per-round Pedersen commitment whose
//!    trapdoor only the correspondents know;
//! 4. the aggregator holds one Merkle root per player and each opening carries
//!    a proof that its commitment sits at the current round position.
//!
//! The crate is organised as:
//!
//! - [`group`]: Schnorr-group arithmetic, commitments, trapdoor openings.
//! - [`schedule`] and [`setup`]: seeded pads, the dealer and per-role views.
//! - [`merkle`]: commitment trees and position proofs.
//! - [`protocol`]: player and aggregator state machines, recovery, audits.
//! - [`sim`]: a deterministic discrete-event network simulator.
//! - [`perf`]: closed-form latency, loss and bandwidth models.
//! - [`privacy`] and [`report`]: experiments and trace-derived reports.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub mod group;
pub mod kv;
pub mod merkle;
pub mod perf;
pub mod privacy;
pub mod protocol;
pub mod report;
pub mod schedule;
pub mod setup;
pub mod sim;

pub use group::{Commitment, GroupError, GroupParams, Opening, Scalar};
pub use merkle::{MerkleSchedule, PositionProof};
pub use protocol::{Aggregator, BroadcastPacket, CollectionPacket, Player, Recovery};
pub use schedule::{SecretPair, Seed};
pub use setup::SetupBundle;
pub use sim::{run_simulation, RoundTrace, SimConfig};

/// 1-based player index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PlayerId(pub u16);

impl PlayerId {
    pub fn from_index(idx: usize) -> Self {
        PlayerId(u16::try_from(idx + 1).expect("player index fits in u16"))
    }

    /// 0-based position in per-player tables.
    pub fn index(self) -> usize {
        usize::from(self.0) - 1
    }

    pub fn all(n: usize) -> impl Iterator<Item = PlayerId> {
        (0..n).map(PlayerId::from_index)
    }
}

impl fmt::Display for PlayerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum ProtocolLevel {
    /// Zero-sum pads; every packet must arrive.
    ZeroSum = 1,
    /// Received set `L` is broadcast with the sum.
    LossResilient = 2,
    /// Openings verified against per-round commitments.
    Verified = 3,
    /// Openings verified against per-player Merkle roots.
    MultiRound = 4,
}

impl ProtocolLevel {
    pub const ALL: [ProtocolLevel; 4] =
        [ProtocolLevel::ZeroSum, ProtocolLevel::LossResilient, ProtocolLevel::Verified, ProtocolLevel::MultiRound];

    pub fn number(self) -> u8 {
        self as u8
    }
}

impl From<ProtocolLevel> for u8 {
    fn from(level: ProtocolLevel) -> u8 {
        level as u8
    }
}

impl TryFrom<u8> for ProtocolLevel {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            1 => Ok(ProtocolLevel::ZeroSum),
            2 => Ok(ProtocolLevel::LossResilient),
            3 => Ok(ProtocolLevel::Verified),
            4 => Ok(ProtocolLevel::MultiRound),
            other => Err(format!("protocol level must be 1..=4, got {other}")),
        }
    }
}

impl FromStr for ProtocolLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let v: u8 = s.trim().parse().map_err(|_| format!("bad protocol level `{s}`"))?;
        ProtocolLevel::try_from(v)
    }
}

impl fmt::Display for ProtocolLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

/// How the received set and per-packet proofs are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Broadcast carries `L`.
    #[default]
    List,
    /// Broadcast omits `L`; recipients search small sets of missing players.
    NoList,
    /// No per-packet proofs; faults are found by auditing the round afterwards.
    Optimistic,
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "list" => Ok(Variant::List),
            "no-list" => Ok(Variant::NoList),
            "optimistic" => Ok(Variant::Optimistic),
            other => Err(format!("unknown variant `{other}` (list | no-list | optimistic)")),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::List => "list",
            Variant::NoList => "no-list",
            Variant::Optimistic => "optimistic",
        })
    }
}

/// Which optional fields travel on the wire for a level/variant combination.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WireShape {
    /// Collection packets carry the blinding `s`.
    pub blind: bool,
    /// Collection packets carry a position proof.
    pub proof: bool,
    /// Broadcasts carry the received set.
    pub list: bool,
}

impl WireShape {
    pub fn new(level: ProtocolLevel, variant: Variant) -> Self {
        let verified = variant != Variant::Optimistic;
        WireShape {
            blind: verified && level >= ProtocolLevel::Verified,
            proof: verified && level == ProtocolLevel::MultiRound,
            list: variant != Variant::NoList && level >= ProtocolLevel::LossResilient,
        }
    }
}
