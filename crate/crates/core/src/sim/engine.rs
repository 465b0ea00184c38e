use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::adversary::{forge, Strategy};
use super::channel::Links;
use super::config::{Rotation, SimConfig, Speakers};
use super::trace::{BroadcastRecord, Counters, Outcome, PlayerRecord, RecoveryRecord, RoundTrace};
use super::SimError;
use crate::group::Scalar;
use crate::protocol::frame::{audio_capacity, decode_frame, encode_frame, Frame};
use crate::protocol::transcript::{Event, EventKind};
use crate::protocol::{Aggregator, BlindRecovery, BroadcastPacket, CollectionPacket, Player, Recovery, Verdict};
use crate::setup::SetupBundle;
use crate::{PlayerId, ProtocolLevel, Variant, WireShape};

const STREAM_NET: u64 = 1;
const STREAM_MSG: u64 = 2;
const STREAM_ADV: u64 = 3;

/// Acting aggregator of round `j` under round-robin rotation.
pub fn rotate_aggregator(j: u64, n: usize) -> PlayerId {
    assert!(j >= 1 && n >= 1);
    PlayerId::from_index(((j - 1) % n as u64) as usize)
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub rounds: Vec<RoundTrace>,
    /// Empty unless the scenario asks for a transcript.
    pub events: Vec<Event>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Ev {
    RoundStart(u64),
    Arrival { round: u64, slot: usize },
    Deadline(u64),
    Broadcast { round: u64, slot: usize },
}

impl Ev {
    fn rank(self) -> u8 {
        match self {
            Ev::RoundStart(_) => 0,
            Ev::Arrival { .. } => 1,
            Ev::Deadline(_) => 2,
            Ev::Broadcast { .. } => 3,
        }
    }
}

struct RoundState {
    trace: RoundTrace,
    in_flight: Vec<Option<CollectionPacket>>,
    /// What each correspondent sent, `(a, b)`.
    sent: (Scalar, Scalar),
    broadcast: Option<BroadcastPacket>,
    pending: usize,
}

struct Engine<'a> {
    cfg: &'a SimConfig,
    bundle: &'a SetupBundle,
    shape: WireShape,
    framed: bool,
    players: Vec<Player>,
    aggregator: Aggregator,
    adversaries: Vec<Option<Strategy>>,
    links: Links,
    net: ChaCha20Rng,
    msg: ChaCha20Rng,
    adv: ChaCha20Rng,
    queue: BinaryHeap<Reverse<(u64, u8, u64, Ev)>>,
    seq: u64,
    open: BTreeMap<u64, RoundState>,
    done: Vec<Option<RoundTrace>>,
    events: Vec<Event>,
}

fn stream(seed: u64, id: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Runs `cfg.rounds` rounds over `bundle`; a pure function of its inputs.
pub fn run_simulation(cfg: &SimConfig, bundle: &SetupBundle) -> Result<SimOutput, SimError> {
    cfg.validate()?;
    let mismatch = |m: String| Err(SimError::ConfigMismatch(m));
    if bundle.n() != cfg.n {
        return mismatch(format!("bundle has {} players, scenario {}", bundle.n(), cfg.n));
    }
    if bundle.rounds() < cfg.rounds {
        return mismatch(format!("bundle covers {} rounds, scenario needs {}", bundle.rounds(), cfg.rounds));
    }
    if bundle.level() != cfg.level {
        return mismatch(format!("bundle is for protocol {}, scenario {}", bundle.level(), cfg.level));
    }
    if bundle.correspondents() != cfg.correspondents {
        return mismatch("bundle and scenario name different correspondents".into());
    }
    let framed = audio_capacity(&bundle.params).is_ok();
    if cfg.variant != Variant::List && !framed {
        return mismatch(format!("variant {} needs a group large enough for framed payloads", cfg.variant));
    }
    let mut engine = Engine::new(cfg, bundle, framed)?;
    engine.run()?;
    Ok(SimOutput {
        rounds: engine.done.into_iter().map(|r| r.expect("every round completes")).collect(),
        events: engine.events,
    })
}

impl<'a> Engine<'a> {
    fn new(cfg: &'a SimConfig, bundle: &'a SetupBundle, framed: bool) -> Result<Self, SimError> {
        let players = PlayerId::all(cfg.n)
            .map(|i| Player::from_bundle(bundle, i, cfg.variant))
            .collect::<Result<Vec<_>, _>>()?;
        let mut adversaries = vec![None; cfg.n];
        for a in &cfg.adversaries {
            adversaries[a.player.index()] = Some(a.strategy);
        }
        Ok(Engine {
            cfg,
            bundle,
            shape: WireShape::new(cfg.level, cfg.variant),
            framed,
            players,
            aggregator: Aggregator::new(bundle.aggregator_view(), cfg.variant),
            adversaries,
            links: Links::new(cfg.loss, cfg.n + 1),
            net: stream(cfg.rng_seed, STREAM_NET),
            msg: stream(cfg.rng_seed, STREAM_MSG),
            adv: stream(cfg.rng_seed, STREAM_ADV),
            queue: BinaryHeap::new(),
            seq: 0,
            open: BTreeMap::new(),
            done: vec![None; cfg.rounds as usize],
            events: Vec::new(),
        })
    }

    fn push(&mut self, t: u64, ev: Ev) {
        self.seq += 1;
        self.queue.push(Reverse((t, ev.rank(), self.seq, ev)));
    }

    fn log(&mut self, t_us: u64, round: u64, kind: EventKind) {
        if self.cfg.transcript {
            self.events.push(Event { t_us, round, kind });
        }
    }

    fn run(&mut self) -> Result<(), SimError> {
        self.push(0, Ev::RoundStart(1));
        while let Some(Reverse((t, _, _, ev))) = self.queue.pop() {
            match ev {
                Ev::RoundStart(j) => self.round_start(t, j)?,
                Ev::Arrival { round, slot } => self.arrival(t, round, slot),
                Ev::Deadline(j) => self.deadline(t, j)?,
                Ev::Broadcast { round, slot } => self.deliver_broadcast(t, round, slot)?,
            }
        }
        Ok(())
    }

    fn start_of(&self, j: u64) -> u64 {
        ((j - 1) as f64 * self.cfg.period_us()).round() as u64
    }

    /// Network node of the acting aggregator: 0 for a dedicated one.
    fn aggregator_node(&self, j: u64) -> usize {
        match self.cfg.rotation {
            Rotation::Fixed => 0,
            Rotation::RoundRobin => usize::from(rotate_aggregator(j, self.cfg.n).0),
        }
    }

    fn node_id(node: usize) -> PlayerId {
        PlayerId(node as u16)
    }

    fn draw_message(&mut self) -> Scalar {
        let g = &self.bundle.params;
        if self.framed {
            let cap = audio_capacity(g).expect("framed");
            let audio: Vec<u8> = (0..cap).map(|_| self.msg.random()).collect();
            encode_frame(g, &Frame::Audio(audio)).expect("fits")
        } else {
            g.random_nonzero_scalar(&mut self.msg)
        }
    }

    fn collection_bytes(&self, pkt: &CollectionPacket) -> u32 {
        self.cfg.packet_bytes.unwrap_or_else(|| pkt.encoded_len(&self.bundle.params) as u32)
    }

    fn round_start(&mut self, t: u64, j: u64) -> Result<(), SimError> {
        let n = self.cfg.n;
        let deadline = t + (self.cfg.deadline_ms * 1000.0).round() as u64;
        let agg = self.aggregator_node(j);
        self.aggregator.open_round(j);

        let (a, b) = self.cfg.correspondents;
        let (speak_a, speak_b) = match self.cfg.speak {
            Speakers::Both => (true, true),
            Speakers::A => (true, false),
            Speakers::B => (false, true),
            Speakers::None => (false, false),
        };
        let m_a = if speak_a { self.draw_message() } else { Scalar::zero() };
        let m_b = if speak_b { self.draw_message() } else { Scalar::zero() };
        self.players[a.index()].stage_message(m_a.clone())?;
        self.players[b.index()].stage_message(m_b.clone())?;

        let mut records = Vec::with_capacity(n);
        let mut in_flight = vec![None; n];
        let mut counters = Counters::default();
        let mut arrivals = Vec::new();
        for idx in 0..n {
            let id = PlayerId::from_index(idx);
            let honest = self.players[idx].emit(j)?;
            let strategy = self.adversaries[idx];
            let pkt = match strategy {
                Some(s) => forge(s, self.bundle, self.shape, id, j, self.cfg.rounds, &mut self.adv),
                None => Some(honest),
            };
            let mut rec = PlayerRecord {
                player: id,
                sent_at_us: None,
                arrived_at_us: None,
                lost: false,
                local: false,
                bytes: 0,
                verdict: None,
                adversary: strategy,
            };
            if idx + 1 == agg {
                if let Some(pkt) = pkt {
                    rec.local = true;
                    rec.sent_at_us = Some(t);
                    rec.arrived_at_us = Some(t);
                    let verdict = self.aggregator.ingest(&pkt);
                    rec.verdict = Some(verdict);
                    self.log_verdict(t, j, id, verdict);
                }
                records.push(rec);
                continue;
            }
            let lost = self.links.lost(idx + 1, agg, &mut self.net);
            let latency = self.cfg.latency.sample_us(&mut self.net);
            if let Some(pkt) = pkt {
                rec.sent_at_us = Some(t);
                rec.bytes = self.collection_bytes(&pkt);
                counters.packets_sent += 1;
                self.log(t, j, EventKind::Send { from: id, to: Self::node_id(agg), bytes: rec.bytes as usize });
                if lost {
                    rec.lost = true;
                    counters.packets_lost += 1;
                    self.log(t, j, EventKind::Lost { from: id, to: Self::node_id(agg) });
                } else {
                    in_flight[idx] = Some(pkt);
                    arrivals.push((t + latency, idx));
                }
            }
            records.push(rec);
        }
        let pending = arrivals.len();
        for (at, slot) in arrivals {
            self.push(at, Ev::Arrival { round: j, slot });
        }
        self.open.insert(
            j,
            RoundState {
                trace: RoundTrace {
                    round: j,
                    aggregator: (agg != 0).then(|| Self::node_id(agg)),
                    start_us: t,
                    deadline_us: deadline,
                    players: records,
                    members: Vec::new(),
                    sum: String::new(),
                    broadcast: Vec::new(),
                    recoveries: Vec::new(),
                    flagged: Vec::new(),
                    counters,
                },
                in_flight,
                sent: (m_a, m_b),
                broadcast: None,
                pending,
            },
        );
        self.push(deadline, Ev::Deadline(j));
        if j < self.cfg.rounds {
            let next = self.start_of(j + 1);
            self.push(next, Ev::RoundStart(j + 1));
        }
        Ok(())
    }

    fn log_verdict(&mut self, t: u64, j: u64, player: PlayerId, verdict: Verdict) {
        let kind = match verdict {
            Verdict::Accepted => EventKind::Accept { player },
            Verdict::Rejected(reason) => EventKind::Reject { player, reason },
        };
        self.log(t, j, kind);
    }

    fn arrival(&mut self, t: u64, j: u64, slot: usize) {
        let state = self.open.get_mut(&j).expect("round open until its events resolve");
        let pkt = state.in_flight[slot].take().expect("one arrival per packet");
        let verdict = self.aggregator.ingest(&pkt);
        let rec = &mut state.trace.players[slot];
        rec.arrived_at_us = Some(t);
        rec.verdict = Some(verdict);
        if t <= state.trace.deadline_us {
            state.trace.counters.packets_delivered += 1;
        } else {
            state.trace.counters.packets_late += 1;
        }
        state.pending -= 1;
        let to = state.trace.aggregator.unwrap_or(PlayerId(0));
        let from = PlayerId::from_index(slot);
        self.log(t, j, EventKind::Receive { from, to });
        self.log_verdict(t, j, from, verdict);
        self.maybe_finish(j);
    }

    fn deadline(&mut self, t: u64, j: u64) -> Result<(), SimError> {
        let bc = self.aggregator.finalize(j);
        let agg = self.aggregator_node(j);
        let n = self.cfg.n;
        let bytes =
            self.cfg.packet_bytes.unwrap_or_else(|| bc.encode(&self.bundle.params, n).len() as u32);
        let (a, b) = self.cfg.correspondents;
        let state = self.open.get_mut(&j).expect("open");
        state.trace.members = state
            .trace
            .players
            .iter()
            .filter(|r| r.verdict == Some(Verdict::Accepted))
            .map(|r| r.player)
            .collect();
        state.trace.sum = bc.sum.value().to_str_radix(16);
        state.trace.counters.broadcast_bytes = bytes;
        let aggregator = Self::node_id(agg);

        let mut deliveries = Vec::new();
        let mut records = Vec::with_capacity(n);
        for idx in 0..n {
            if idx + 1 == agg {
                continue;
            }
            let lost = self.cfg.broadcast_loss && self.links.lost(agg, idx + 1, &mut self.net);
            let latency = self.cfg.latency.sample_us(&mut self.net);
            let to = PlayerId::from_index(idx);
            let arrived = (!lost).then_some(t + latency);
            records.push(BroadcastRecord { to, arrived_at_us: arrived });
            if to == a || to == b {
                deliveries.push((to, arrived));
            }
        }
        let state = self.open.get_mut(&j).expect("open");
        let c = &mut state.trace.counters;
        c.broadcasts_sent = records.len() as u32;
        c.broadcasts_lost = records.iter().filter(|r| r.arrived_at_us.is_none()).count() as u32;
        c.broadcasts_delivered = c.broadcasts_sent - c.broadcasts_lost;
        state.trace.broadcast = records;
        state.broadcast = Some(bc.clone());
        self.log(
            t,
            j,
            EventKind::Broadcast {
                aggregator,
                members: bc.members.as_ref().map(|m| m.iter().copied().collect()),
                sum: bc.sum.value().to_str_radix(16),
                bytes: bytes as usize,
            },
        );

        if agg == usize::from(a.0) || agg == usize::from(b.0) {
            self.recover(t, j, aggregator)?;
        }
        for (to, arrived) in deliveries {
            match arrived {
                Some(at) => {
                    self.open.get_mut(&j).expect("open").pending += 1;
                    self.push(at, Ev::Broadcast { round: j, slot: to.index() });
                }
                None => self.record_outcome(t, j, to, Outcome::BroadcastLost, None),
            }
        }
        self.maybe_finish(j);
        Ok(())
    }

    fn deliver_broadcast(&mut self, t: u64, j: u64, slot: usize) -> Result<(), SimError> {
        self.open.get_mut(&j).expect("open").pending -= 1;
        self.recover(t, j, PlayerId::from_index(slot))?;
        self.maybe_finish(j);
        Ok(())
    }

    fn record_outcome(&mut self, t: u64, j: u64, player: PlayerId, outcome: Outcome, at: Option<u64>) {
        let state = self.open.get_mut(&j).expect("open");
        state.trace.recoveries.push(RecoveryRecord { player, outcome, at_us: at });
        state.trace.recoveries.sort_by_key(|r| r.player);
        self.log(t, j, EventKind::Recover { player, outcome: outcome.as_str().to_string() });
    }

    fn recover(&mut self, t: u64, j: u64, who: PlayerId) -> Result<(), SimError> {
        let (outcome, flagged) = self.evaluate(j, who)?;
        if let Some(flagged) = flagged {
            for p in &flagged {
                self.aggregator.ban(*p);
            }
            self.log(t, j, EventKind::Audit { player: who, flagged: flagged.clone() });
            let state = self.open.get_mut(&j).expect("open");
            state.trace.flagged.extend(flagged);
            state.trace.flagged.sort();
            state.trace.flagged.dedup();
        }
        self.record_outcome(t, j, who, outcome, Some(t));
        Ok(())
    }

    /// Recovery outcome against ground truth, plus the players an audit
    /// flagged if the result looked corrupted.
    fn evaluate(&self, j: u64, who: PlayerId) -> Result<(Outcome, Option<Vec<PlayerId>>), SimError> {
        let (a, _) = self.cfg.correspondents;
        let state = &self.open[&j];
        let bc = state.broadcast.as_ref().expect("finalized");
        let player = &self.players[who.index()];
        let peer = player.peer().expect("correspondent");
        let peer_m = if peer == a { &state.sent.0 } else { &state.sent.1 };
        let peer_in = state.trace.is_member(peer);
        let g = &self.bundle.params;
        let use_list = self.shape.list || self.cfg.level == ProtocolLevel::ZeroSum;
        let mut suspicious = false;
        let outcome = if use_list {
            match player.recover(bc)? {
                Recovery::Message(v) => {
                    suspicious = self.framed && decode_frame(g, &v).is_none();
                    if peer_in && v == *peer_m {
                        Outcome::Correct
                    } else {
                        Outcome::Garbled
                    }
                }
                Recovery::PeerAbsent if !peer_in => Outcome::PeerAbsent,
                Recovery::PeerAbsent => Outcome::Garbled,
            }
        } else {
            match player.recover_without_list(bc, self.cfg.max_missing)? {
                BlindRecovery::Decoded { message, .. } => {
                    let expected = if peer_in { peer_m.clone() } else { Scalar::zero() };
                    match (message == expected, peer_in) {
                        (true, true) => Outcome::Correct,
                        (true, false) => Outcome::PeerAbsent,
                        (false, _) => Outcome::Garbled,
                    }
                }
                BlindRecovery::Undecodable { .. } => Outcome::Undecodable,
            }
        };
        let flagged = if suspicious && self.cfg.variant == Variant::Optimistic {
            match self.aggregator.round_log(j) {
                Some(log) => Some(player.audit(log)?.into_iter().collect()),
                None => None,
            }
        } else {
            None
        };
        Ok((outcome, flagged))
    }

    fn maybe_finish(&mut self, j: u64) {
        let ready = self.open.get(&j).is_some_and(|s| s.pending == 0 && s.broadcast.is_some());
        if ready {
            let state = self.open.remove(&j).expect("present");
            self.done[j as usize - 1] = Some(state.trace);
        }
    }
}
