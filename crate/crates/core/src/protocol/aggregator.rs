use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::audit::RoundLog;
use super::packet::{BroadcastPacket, CollectionPacket};
use crate::group::{GroupParams, Scalar};
use crate::merkle::verify_position;
use crate::setup::{AggregatorView, Verifier};
use crate::{PlayerId, ProtocolLevel, Variant, WireShape};

/// Finalized rounds kept for audits.
const LOG_DEPTH: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    BadOpening,
    BadProof,
    DuplicateSender,
    WrongRound,
    LateArrival,
    UnknownSender,
    Banned,
}

impl RejectReason {
    pub const ALL: [RejectReason; 7] = [
        RejectReason::BadOpening,
        RejectReason::BadProof,
        RejectReason::DuplicateSender,
        RejectReason::WrongRound,
        RejectReason::LateArrival,
        RejectReason::UnknownSender,
        RejectReason::Banned,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::BadOpening => "bad_opening",
            RejectReason::BadProof => "bad_proof",
            RejectReason::DuplicateSender => "duplicate_sender",
            RejectReason::WrongRound => "wrong_round",
            RejectReason::LateArrival => "late_arrival",
            RejectReason::UnknownSender => "unknown_sender",
            RejectReason::Banned => "banned",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accepted,
    Rejected(RejectReason),
}

impl Verdict {
    pub fn is_accepted(self) -> bool {
        self == Verdict::Accepted
    }
}

#[derive(Debug, Default)]
struct Buffer {
    accepted: BTreeMap<PlayerId, Scalar>,
}

/// Collects openings for any number of concurrently open rounds.
///
/// Holds public parameters and the verifier only.
#[derive(Debug)]
pub struct Aggregator {
    params: GroupParams,
    level: ProtocolLevel,
    shape: WireShape,
    n: usize,
    rounds: u64,
    verifier: Arc<Verifier>,
    open: BTreeMap<u64, Buffer>,
    finalized: BTreeSet<u64>,
    banned: BTreeSet<PlayerId>,
    log: VecDeque<RoundLog>,
}

impl Aggregator {
    pub fn new(view: AggregatorView, variant: Variant) -> Self {
        Self::with_verifier(view.params, view.level, variant, view.n, view.rounds, Arc::new(view.verifier))
    }

    pub fn with_verifier(
        params: GroupParams,
        level: ProtocolLevel,
        variant: Variant,
        n: usize,
        rounds: u64,
        verifier: Arc<Verifier>,
    ) -> Self {
        Aggregator {
            params: params.public(),
            level,
            shape: WireShape::new(level, variant),
            n,
            rounds,
            verifier,
            open: BTreeMap::new(),
            finalized: BTreeSet::new(),
            banned: BTreeSet::new(),
            log: VecDeque::new(),
        }
    }

    pub fn params(&self) -> &GroupParams {
        &self.params
    }

    pub fn level(&self) -> ProtocolLevel {
        self.level
    }

    pub fn shape(&self) -> WireShape {
        self.shape
    }

    /// Starts accepting packets for `round`. Idempotent while it is open.
    pub fn open_round(&mut self, round: u64) {
        if !self.finalized.contains(&round) {
            self.open.entry(round).or_default();
        }
    }

    pub fn is_open(&self, round: u64) -> bool {
        self.open.contains_key(&round)
    }

    pub fn ban(&mut self, player: PlayerId) {
        self.banned.insert(player);
    }

    pub fn banned(&self) -> &BTreeSet<PlayerId> {
        &self.banned
    }

    pub fn ingest(&mut self, pkt: &CollectionPacket) -> Verdict {
        match self.check(pkt) {
            Ok(()) => {
                let buf = self.open.get_mut(&pkt.round).expect("checked open");
                buf.accepted.insert(pkt.sender, pkt.value.clone());
                Verdict::Accepted
            }
            Err(reason) => Verdict::Rejected(reason),
        }
    }

    fn check(&self, pkt: &CollectionPacket) -> Result<(), RejectReason> {
        if pkt.sender.0 == 0 || usize::from(pkt.sender.0) > self.n {
            return Err(RejectReason::UnknownSender);
        }
        let Some(buf) = self.open.get(&pkt.round) else {
            return Err(if self.finalized.contains(&pkt.round) {
                RejectReason::LateArrival
            } else {
                RejectReason::WrongRound
            });
        };
        if self.banned.contains(&pkt.sender) {
            return Err(RejectReason::Banned);
        }
        if buf.accepted.contains_key(&pkt.sender) {
            return Err(RejectReason::DuplicateSender);
        }
        if self.shape.blind {
            let Some(s) = &pkt.blind else {
                return Err(if self.shape.proof { RejectReason::BadProof } else { RejectReason::BadOpening });
            };
            match self.verifier.as_ref() {
                Verifier::Commitments(cs) => {
                    let c = cs
                        .get(pkt.sender.index())
                        .and_then(|row| row.get(pkt.round.wrapping_sub(1) as usize))
                        .ok_or(RejectReason::WrongRound)?;
                    if !self.params.verify_opening(c, &pkt.value, s) {
                        return Err(RejectReason::BadOpening);
                    }
                }
                Verifier::Roots(roots) => {
                    let Some(proof) = &pkt.proof else {
                        return Err(RejectReason::BadProof);
                    };
                    if pkt.round == 0 || pkt.round > self.rounds {
                        return Err(RejectReason::WrongRound);
                    }
                    let c = self.params.commit(&pkt.value, s);
                    if !verify_position(&self.params, &roots[pkt.sender.index()], &c, pkt.round, proof) {
                        return Err(RejectReason::BadProof);
                    }
                }
                Verifier::Open => {}
            }
        }
        Ok(())
    }

    /// Closes `round` and returns `(L, X)`. A round never opened yields `(∅, 0)`.
    pub fn finalize(&mut self, round: u64) -> BroadcastPacket {
        let buf = self.open.remove(&round).unwrap_or_default();
        self.finalized.insert(round);
        let sum = self.params.sum(buf.accepted.values());
        let members: BTreeSet<PlayerId> = buf.accepted.keys().copied().collect();
        self.log.push_back(RoundLog { round, openings: buf.accepted.into_iter().collect() });
        if self.log.len() > LOG_DEPTH {
            self.log.pop_front();
        }
        BroadcastPacket { round, members: self.shape.list.then_some(members), sum }
    }

    /// Accepted openings of a recently finalized round, as published for an audit.
    pub fn round_log(&self, round: u64) -> Option<&RoundLog> {
        self.log.iter().rev().find(|l| l.round == round)
    }
}
