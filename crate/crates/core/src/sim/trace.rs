//! Per-round traces and their JSON-lines and CSV renderings.
//!
//! Summary CSV columns, one row per round:
//!
//! ```text
//! round,aggregator,start_us,deadline_us,members,lossfree,sent,delivered,lost,late,
//! accepted,rejected,last_arrival_us,collection_bytes,broadcast_bytes,
//! broadcasts_delivered,broadcasts_lost,outcome_a,outcome_b
//! ```
//!
//! `aggregator` is `0` for a dedicated aggregator; `last_arrival_us` is the
//! latest in-time arrival relative to the round start, empty if none.

use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::adversary::Strategy;
use crate::protocol::Verdict;
use crate::PlayerId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// The peer's message was recovered exactly.
    Correct,
    /// A value was produced and it is wrong.
    Garbled,
    /// The peer was correctly reported absent.
    PeerAbsent,
    /// Search without a received list found zero or several candidates.
    Undecodable,
    /// The broadcast never reached this correspondent.
    BroadcastLost,
}

impl Outcome {
    pub const ALL: [Outcome; 5] =
        [Outcome::Correct, Outcome::Garbled, Outcome::PeerAbsent, Outcome::Undecodable, Outcome::BroadcastLost];

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Correct => "correct",
            Outcome::Garbled => "garbled",
            Outcome::PeerAbsent => "peer_absent",
            Outcome::Undecodable => "undecodable",
            Outcome::BroadcastLost => "broadcast_lost",
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlayerRecord {
    pub player: PlayerId,
    /// Absent when nothing was sent.
    pub sent_at_us: Option<u64>,
    pub arrived_at_us: Option<u64>,
    pub lost: bool,
    /// Ingested by the acting aggregator itself, off the network.
    pub local: bool,
    pub bytes: u32,
    pub verdict: Option<Verdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adversary: Option<Strategy>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BroadcastRecord {
    pub to: PlayerId,
    /// `None` if lost.
    pub arrived_at_us: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecoveryRecord {
    pub player: PlayerId,
    pub outcome: Outcome,
    pub at_us: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counters {
    pub packets_sent: u32,
    pub packets_delivered: u32,
    pub packets_lost: u32,
    pub packets_late: u32,
    pub broadcasts_sent: u32,
    pub broadcasts_delivered: u32,
    pub broadcasts_lost: u32,
    pub broadcast_bytes: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundTrace {
    pub round: u64,
    /// `None` for the dedicated aggregator.
    pub aggregator: Option<PlayerId>,
    pub start_us: u64,
    pub deadline_us: u64,
    pub players: Vec<PlayerRecord>,
    /// The received set `L`.
    pub members: Vec<PlayerId>,
    /// `X`, lowercase hex.
    pub sum: String,
    pub broadcast: Vec<BroadcastRecord>,
    pub recoveries: Vec<RecoveryRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flagged: Vec<PlayerId>,
    pub counters: Counters,
}

impl RoundTrace {
    pub fn lossfree(&self, n: usize) -> bool {
        self.members.len() == n
    }

    pub fn is_member(&self, p: PlayerId) -> bool {
        self.members.binary_search(&p).is_ok()
    }

    pub fn outcome(&self, p: PlayerId) -> Option<Outcome> {
        self.recoveries.iter().find(|r| r.player == p).map(|r| r.outcome)
    }

    pub fn accepted(&self) -> usize {
        self.players.iter().filter(|r| r.verdict == Some(Verdict::Accepted)).count()
    }

    pub fn rejected(&self) -> usize {
        self.players.iter().filter(|r| matches!(r.verdict, Some(Verdict::Rejected(_)))).count()
    }

    /// Latest in-time network arrival, relative to the round start.
    pub fn last_arrival_us(&self) -> Option<u64> {
        self.players
            .iter()
            .filter(|r| !r.local)
            .filter_map(|r| r.arrived_at_us)
            .filter(|&t| t <= self.deadline_us)
            .max()
            .map(|t| t - self.start_us)
    }

    pub fn collection_bytes(&self) -> u64 {
        self.players.iter().filter(|r| r.sent_at_us.is_some() && !r.local).map(|r| u64::from(r.bytes)).sum()
    }
}

pub fn write_jsonl<W: Write>(mut out: W, rounds: &[RoundTrace]) -> io::Result<()> {
    for r in rounds {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl(text: &str) -> Result<Vec<RoundTrace>, serde_json::Error> {
    text.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect()
}

pub const SUMMARY_HEADER: &str = "round,aggregator,start_us,deadline_us,members,lossfree,sent,delivered,lost,late,\
accepted,rejected,last_arrival_us,collection_bytes,broadcast_bytes,broadcasts_delivered,broadcasts_lost,outcome_a,outcome_b";

pub fn write_summary_csv<W: Write>(
    mut out: W,
    rounds: &[RoundTrace],
    n: usize,
    correspondents: (PlayerId, PlayerId),
) -> io::Result<()> {
    writeln!(out, "{SUMMARY_HEADER}")?;
    let outcome = |r: &RoundTrace, p| r.outcome(p).map(Outcome::as_str).unwrap_or("");
    for r in rounds {
        let c = &r.counters;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.round,
            r.aggregator.map_or(0, |p| p.0),
            r.start_us,
            r.deadline_us,
            r.members.len(),
            u8::from(r.lossfree(n)),
            c.packets_sent,
            c.packets_delivered,
            c.packets_lost,
            c.packets_late,
            r.accepted(),
            r.rejected(),
            r.last_arrival_us().map(|t| t.to_string()).unwrap_or_default(),
            r.collection_bytes(),
            u64::from(c.broadcast_bytes) * u64::from(c.broadcasts_sent),
            c.broadcasts_delivered,
            c.broadcasts_lost,
            outcome(r, correspondents.0),
            outcome(r, correspondents.1),
        )?;
    }
    Ok(())
}
