use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use thiserror::Error;

use super::audit::{audit_round, RoundLog};
use super::frame::{audio_capacity, decode_frame, Frame, FrameError};
use super::packet::{BroadcastPacket, CollectionPacket};
use crate::group::{GroupError, GroupParams, Scalar};
use crate::merkle::MerkleSchedule;
use crate::schedule::{self, SecretPair};
use crate::setup::{CorrespondentView, KeyTable, PadMaterial, PlayerView, SetupBundle, SetupError};
use crate::{PlayerId, ProtocolLevel, Variant, WireShape};

/// Sent messages older than this many rounds are forgotten.
const SENT_HISTORY: u64 = 4096;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PlayerError {
    #[error("round {round} is past the schedule of {rounds} rounds")]
    ScheduleExhausted { round: u64, rounds: u64 },
    #[error("expected round {expected}, asked for {got}")]
    RoundMismatch { expected: u64, got: u64 },
    #[error("{0} is a bystander")]
    NotCorrespondent(PlayerId),
    #[error("broadcast for round {0} carries no received set")]
    MissingList(u64),
    #[error("no record of what was sent in round {0}")]
    UnknownRound(u64),
    #[error("no pad for round {0}")]
    MissingPad(u64),
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Setup(#[from] SetupError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Recovery {
    Message(Scalar),
    PeerAbsent,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BlindRecovery {
    Decoded { message: Scalar, frame: Frame, missing: BTreeSet<PlayerId> },
    Undecodable { candidates: usize },
}

#[derive(Debug, Clone)]
enum Role {
    Bystander { pad: PadMaterial },
    Correspondent { peer: PlayerId, keys: Arc<KeyTable> },
}

#[derive(Debug, Clone)]
struct OwnTree {
    all: Arc<Vec<MerkleSchedule>>,
    index: usize,
}

/// One participant. Correspondents additionally stage messages and recover
/// their peer's.
#[derive(Debug, Clone)]
pub struct Player {
    id: PlayerId,
    n: usize,
    level: ProtocolLevel,
    shape: WireShape,
    rounds: u64,
    params: GroupParams,
    role: Role,
    tree: Option<OwnTree>,
    next_round: u64,
    pending: Option<Scalar>,
    sent: BTreeMap<u64, Scalar>,
}

impl Player {
    /// In-process player sharing the bundle's tables.
    pub fn from_bundle(bundle: &SetupBundle, id: PlayerId, variant: Variant) -> Result<Self, PlayerError> {
        let view = bundle.player_view(id)?;
        let role = if bundle.is_correspondent(id) {
            let (a, b) = bundle.correspondents();
            Role::Correspondent { peer: if id == a { b } else { a }, keys: bundle.shared_keys() }
        } else {
            Role::Bystander { pad: view.pad }
        };
        let params = if bundle.is_correspondent(id) { bundle.params.clone() } else { view.params };
        let tree = bundle.shared_trees().map(|all| OwnTree { all, index: id.index() });
        Ok(Self::assemble(id, bundle.n(), bundle.level(), variant, bundle.rounds(), params, role, tree))
    }

    /// Bystander from its serialized view; rebuilds its own tree at level 4.
    pub fn from_view(view: PlayerView, n: usize, variant: Variant) -> Result<Self, PlayerError> {
        let tree = if view.level == ProtocolLevel::MultiRound {
            let pad = &view.pad;
            let params = &view.params;
            let id = view.index;
            let mut missing = None;
            let pairs: Vec<_> = (1..=view.rounds)
                .map(|j| {
                    pad.pair(params, id, j).unwrap_or_else(|| {
                        missing.get_or_insert(j);
                        SecretPair { k: Scalar::zero(), r: Scalar::zero() }
                    })
                })
                .collect();
            if let Some(j) = missing {
                return Err(PlayerError::MissingPad(j));
            }
            let tree = schedule::build_trees(params, 1, view.rounds, |_, j| pairs[j as usize - 1].clone());
            Some(OwnTree { all: Arc::new(tree), index: 0 })
        } else {
            None
        };
        Ok(Self::assemble(
            view.index,
            n,
            view.level,
            variant,
            view.rounds,
            view.params,
            Role::Bystander { pad: view.pad },
            tree,
        ))
    }

    pub fn from_correspondent_view(view: CorrespondentView, variant: Variant) -> Result<Self, PlayerError> {
        let n = view.pairs.len();
        let tree = (view.level == ProtocolLevel::MultiRound).then(|| {
            let trees = schedule::build_trees(&view.params, n, view.rounds, |i, j| {
                view.pairs[i.index()][j as usize - 1].clone()
            });
            OwnTree { all: Arc::new(trees), index: view.index.index() }
        });
        let role = Role::Correspondent { peer: view.peer, keys: Arc::new(KeyTable::Pairs(view.pairs)) };
        Ok(Self::assemble(view.index, n, view.level, variant, view.rounds, view.params, role, tree))
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        id: PlayerId,
        n: usize,
        level: ProtocolLevel,
        variant: Variant,
        rounds: u64,
        params: GroupParams,
        role: Role,
        tree: Option<OwnTree>,
    ) -> Self {
        Player {
            id,
            n,
            level,
            shape: WireShape::new(level, variant),
            rounds,
            params,
            role,
            tree,
            next_round: 1,
            pending: None,
            sent: BTreeMap::new(),
        }
    }

    pub fn id(&self) -> PlayerId {
        self.id
    }

    pub fn is_correspondent(&self) -> bool {
        matches!(self.role, Role::Correspondent { .. })
    }

    pub fn peer(&self) -> Option<PlayerId> {
        match self.role {
            Role::Correspondent { peer, .. } => Some(peer),
            Role::Bystander { .. } => None,
        }
    }

    pub fn next_round(&self) -> u64 {
        self.next_round
    }

    pub fn params(&self) -> &GroupParams {
        &self.params
    }

    /// Message for the next emitted round; bystanders refuse.
    pub fn stage_message(&mut self, m: Scalar) -> Result<(), PlayerError> {
        if !self.is_correspondent() {
            return Err(PlayerError::NotCorrespondent(self.id));
        }
        self.pending = Some(m);
        Ok(())
    }

    pub fn stage_frame(&mut self, frame: &Frame) -> Result<(), PlayerError> {
        let m = super::frame::encode_frame(&self.params, frame)?;
        self.stage_message(m)
    }

    fn own_pair(&self, round: u64) -> Result<SecretPair, PlayerError> {
        match &self.role {
            Role::Bystander { pad } => pad.pair(&self.params, self.id, round).ok_or(PlayerError::MissingPad(round)),
            Role::Correspondent { keys, .. } => Ok(keys.pair(&self.params, self.id, round)),
        }
    }

    /// Packet for round `round`, which must be the next round.
    pub fn emit(&mut self, round: u64) -> Result<CollectionPacket, PlayerError> {
        if round > self.rounds {
            return Err(PlayerError::ScheduleExhausted { round, rounds: self.rounds });
        }
        if round != self.next_round {
            return Err(PlayerError::RoundMismatch { expected: self.next_round, got: round });
        }
        let pair = self.own_pair(round)?;
        let m = self.pending.take().unwrap_or_else(Scalar::zero);
        let (value, blind) = if m.is_zero() {
            (pair.k, pair.r)
        } else if self.shape.blind {
            let o = self.params.equivocate(&pair.k, &pair.r, &m)?;
            (o.value, o.blind)
        } else {
            (self.params.add(&pair.k, &m), pair.r)
        };
        let proof = if self.shape.proof {
            let tree = self.tree.as_ref().expect("level-4 players hold their tree");
            Some(tree.all[tree.index].prove(round).map_err(|_| PlayerError::MissingPad(round))?)
        } else {
            None
        };
        if self.is_correspondent() {
            self.sent.insert(round, m);
            let horizon = round.saturating_sub(SENT_HISTORY);
            self.sent = self.sent.split_off(&horizon);
        }
        self.next_round += 1;
        Ok(CollectionPacket {
            round,
            sender: self.id,
            value,
            blind: self.shape.blind.then_some(blind),
            proof,
        })
    }

    fn correspondent_keys(&self) -> Result<(PlayerId, &KeyTable), PlayerError> {
        match &self.role {
            Role::Correspondent { peer, keys } => Ok((*peer, keys)),
            Role::Bystander { .. } => Err(PlayerError::NotCorrespondent(self.id)),
        }
    }

    fn sent_in(&self, round: u64) -> Result<&Scalar, PlayerError> {
        self.sent.get(&round).ok_or(PlayerError::UnknownRound(round))
    }

    /// The peer's message, given the broadcast `(L, X)`.
    ///
    /// At level 1 a missing list means everyone was received.
    pub fn recover(&self, bc: &BroadcastPacket) -> Result<Recovery, PlayerError> {
        let (peer, keys) = self.correspondent_keys()?;
        let all;
        let members = match &bc.members {
            Some(m) => m,
            None if self.level == ProtocolLevel::ZeroSum => {
                all = PlayerId::all(self.n).collect::<BTreeSet<_>>();
                &all
            }
            None => return Err(PlayerError::MissingList(bc.round)),
        };
        if !members.contains(&peer) {
            return Ok(Recovery::PeerAbsent);
        }
        let mut m = bc.sum.clone();
        for &i in members {
            if usize::from(i.0) > self.n || i.0 == 0 {
                continue;
            }
            m = self.params.sub(&m, &keys.pair(&self.params, i, bc.round).k);
        }
        if members.contains(&self.id) {
            m = self.params.sub(&m, self.sent_in(bc.round)?);
        }
        Ok(Recovery::Message(m))
    }

    /// Recovery from `X` alone: tries every set of at most `max_missing`
    /// absent players and keeps the candidates that decode as frames.
    pub fn recover_without_list(&self, bc: &BroadcastPacket, max_missing: usize) -> Result<BlindRecovery, PlayerError> {
        let (_, keys) = self.correspondent_keys()?;
        audio_capacity(&self.params)?;
        let g = &self.params;
        let own = self.sent_in(bc.round)?.clone();
        let ks: Vec<Scalar> = PlayerId::all(self.n).map(|i| keys.pair(g, i, bc.round).k).collect();
        // Candidate with nobody missing; each missing player adds its pad back.
        let base = g.sub(&g.sub(&bc.sum, &g.sum(&ks)), &own);
        let self_idx = self.id.index();
        let candidate = |missing: &[usize]| {
            let mut m = base.clone();
            for &i in missing {
                m = g.add(&m, &ks[i]);
                if i == self_idx {
                    m = g.add(&m, &own);
                }
            }
            m
        };
        let mut hits = Vec::new();
        let mut consider = |missing: &[usize]| {
            let m = candidate(missing);
            if let Some(frame) = decode_frame(g, &m) {
                hits.push((m, frame, missing.iter().map(|&i| PlayerId::from_index(i)).collect()));
            }
        };
        consider(&[]);
        if max_missing >= 1 {
            for i in 0..self.n {
                consider(&[i]);
            }
        }
        if max_missing >= 2 {
            for i in 0..self.n {
                for j in i + 1..self.n {
                    consider(&[i, j]);
                }
            }
        }
        if max_missing >= 3 {
            let mut stack = vec![0usize; max_missing];
            for size in 3..=max_missing.min(self.n) {
                subsets(self.n, size, &mut stack[..size], 0, 0, &mut consider);
            }
        }
        if hits.len() == 1 {
            let (message, frame, missing) = hits.pop().unwrap();
            Ok(BlindRecovery::Decoded { message, frame, missing })
        } else {
            Ok(BlindRecovery::Undecodable { candidates: hits.len() })
        }
    }

    /// Players whose logged opening is not their pad.
    pub fn audit(&self, log: &RoundLog) -> Result<BTreeSet<PlayerId>, PlayerError> {
        let (peer, keys) = self.correspondent_keys()?;
        Ok(audit_round(&self.params, keys, (self.id, peer), log))
    }
}

fn subsets(n: usize, size: usize, buf: &mut [usize], depth: usize, start: usize, f: &mut impl FnMut(&[usize])) {
    if depth == size {
        f(buf);
        return;
    }
    for i in start..n {
        buf[depth] = i;
        subsets(n, size, buf, depth + 1, i + 1, f);
    }
}
