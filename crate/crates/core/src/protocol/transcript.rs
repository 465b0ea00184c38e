//! Per-event transcript, one JSON object per line.
//!
//! ```json
//! {"t_us":20000,"round":2,"event":"send","from":3,"to":1,"bytes":52}
//! {"t_us":231877,"round":2,"event":"reject","player":3,"reason":"bad_opening"}
//! ```

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::aggregator::RejectReason;
use crate::PlayerId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EventKind {
    Send { from: PlayerId, to: PlayerId, bytes: usize },
    Lost { from: PlayerId, to: PlayerId },
    Receive { from: PlayerId, to: PlayerId },
    Accept { player: PlayerId },
    Reject { player: PlayerId, reason: RejectReason },
    Broadcast { aggregator: PlayerId, members: Option<Vec<PlayerId>>, sum: String, bytes: usize },
    Recover { player: PlayerId, outcome: String },
    Audit { player: PlayerId, flagged: Vec<PlayerId> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t_us: u64,
    pub round: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

pub fn write_jsonl<W: Write>(mut out: W, events: &[Event]) -> io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
