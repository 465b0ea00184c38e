//! Trusted dealer output and the per-role views handed to players,
//! correspondents and the aggregator.
//!
//! Serialized views are JSON documents:
//!
//! | file            | type                | contents                                         |
//! |-----------------|---------------------|--------------------------------------------------|
//! | `bundle.json`   | [`BundleFile`]      | dealer config, params with trapdoor, every pad   |
//! | `player-i.json` | [`PlayerView`]      | public params, the player's own pad material     |
//! | `corr-i.json`   | [`CorrespondentView`] | params with trapdoor, peer id, all pairs       |
//! | `aggregator.json` | [`AggregatorView`] | public params plus commitments or Merkle roots |
//!
//! Scalars and group elements are lowercase hex strings, seeds and digests are
//! 64-character hex strings.

use std::sync::Arc;

use rand::SeedableRng;
use rayon::prelude::*;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::group::{Commitment, GroupParams};
use crate::merkle::{Digest, MerkleSchedule};
use crate::schedule::{self, derive_pair, ScheduleError, SecretPair, Seed};
use crate::{PlayerId, ProtocolLevel};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SetupError {
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("correspondents must be two distinct players in 1..={n}, got {a} and {b}")]
    BadCorrespondents { a: PlayerId, b: PlayerId, n: usize },
    #[error("{0} is not a correspondent")]
    NotCorrespondent(PlayerId),
    #[error("player {0} outside the group")]
    UnknownPlayer(PlayerId),
    #[error("inconsistent bundle: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DealerConfig {
    pub n: usize,
    pub rounds: u64,
    pub level: ProtocolLevel,
    pub correspondents: (PlayerId, PlayerId),
    pub rng_seed: u64,
}

/// How a player obtains its round pads.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PadMaterial {
    /// Pads derived on demand from a seed.
    Seed(Seed),
    /// Pads handed out explicitly, one per round (zero-sum setups).
    Explicit(Vec<SecretPair>),
}

impl PadMaterial {
    pub fn pair(&self, params: &GroupParams, player: PlayerId, round: u64) -> Option<SecretPair> {
        match self {
            PadMaterial::Seed(seed) => Some(derive_pair(params, seed, player, round)),
            PadMaterial::Explicit(pairs) => round.checked_sub(1).and_then(|i| pairs.get(i as usize)).cloned(),
        }
    }
}

/// What the aggregator checks openings against.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verifier {
    /// Levels 1 and 2 accept every opening.
    Open,
    /// `commitments[i - 1][j - 1]`.
    Commitments(Vec<Vec<Commitment>>),
    /// One Merkle root per player.
    Roots(#[serde(with = "digest_list")] Vec<Digest>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlayerView {
    pub index: PlayerId,
    pub params: GroupParams,
    pub level: ProtocolLevel,
    pub rounds: u64,
    pub pad: PadMaterial,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrespondentView {
    pub index: PlayerId,
    pub peer: PlayerId,
    /// Carries the trapdoor.
    pub params: GroupParams,
    pub level: ProtocolLevel,
    pub rounds: u64,
    /// `pairs[i - 1][j - 1]` for every player.
    pub pairs: Vec<Vec<SecretPair>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregatorView {
    pub params: GroupParams,
    pub level: ProtocolLevel,
    pub n: usize,
    pub rounds: u64,
    pub verifier: Verifier,
}

/// Every player's pads for every round, as held by the correspondents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KeyTable {
    /// Materialised `pairs[i - 1][j - 1]`.
    Pairs(Vec<Vec<SecretPair>>),
    /// Seeds from which the pairs are derived on demand.
    Seeds(Vec<Seed>),
}

impl KeyTable {
    pub fn n(&self) -> usize {
        match self {
            KeyTable::Pairs(p) => p.len(),
            KeyTable::Seeds(s) => s.len(),
        }
    }

    /// # Panics
    ///
    /// On an unknown player or, for materialised tables, a round without a pad.
    pub fn pair(&self, params: &GroupParams, player: PlayerId, round: u64) -> SecretPair {
        match self {
            KeyTable::Pairs(p) => p[player.index()][round as usize - 1].clone(),
            KeyTable::Seeds(s) => derive_pair(params, &s[player.index()], player, round),
        }
    }

    pub fn pad_material(&self, player: PlayerId) -> PadMaterial {
        match self {
            KeyTable::Pairs(p) => PadMaterial::Explicit(p[player.index()].clone()),
            KeyTable::Seeds(s) => PadMaterial::Seed(s[player.index()]),
        }
    }

    pub fn materialize(&self, params: &GroupParams, rounds: u64) -> Vec<Vec<SecretPair>> {
        match self {
            KeyTable::Pairs(p) => p.clone(),
            KeyTable::Seeds(s) => crate::schedule::derive_all(params, s, rounds),
        }
    }
}

/// Serialized form of a [`SetupBundle`]; everything else is recomputed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleFile {
    pub config: DealerConfig,
    pub params: GroupParams,
    pub pads: Vec<PadMaterial>,
}

/// Everything the dealer produced, with derived tables shared behind `Arc`s
/// so in-process players do not recompute them.
#[derive(Debug, Clone)]
pub struct SetupBundle {
    pub config: DealerConfig,
    /// With trapdoor.
    pub params: GroupParams,
    keys: Arc<KeyTable>,
    trees: Option<Arc<Vec<MerkleSchedule>>>,
    verifier: Verifier,
}

impl SetupBundle {
    /// Runs the dealer. If `params` already carry a trapdoor it is kept,
    /// otherwise a fresh one is drawn from the seeded RNG.
    pub fn generate(params: &GroupParams, config: DealerConfig) -> Result<Self, SetupError> {
        check_correspondents(&config)?;
        let (params, keys) = match config.level {
            ProtocolLevel::ZeroSum => {
                if config.n < 3 {
                    return Err(ScheduleError::TooFewPlayers(config.n).into());
                }
                if config.rounds == 0 {
                    return Err(ScheduleError::NoRounds.into());
                }
                let mut rng = ChaCha20Rng::seed_from_u64(config.rng_seed);
                let params = schedule::with_fresh_trapdoor(params, &mut rng);
                let mut pairs = vec![Vec::with_capacity(config.rounds as usize); config.n];
                for _ in 0..config.rounds {
                    let keys = schedule::dealer_setup_zero_sum(&params, config.n, &mut rng)?;
                    for (row, k) in pairs.iter_mut().zip(keys) {
                        row.push(SecretPair { k, r: Default::default() });
                    }
                }
                (params, KeyTable::Pairs(pairs))
            }
            _ => {
                let (params, seeds) = schedule::stream_seeds(params, config.n, config.rounds, config.rng_seed)?;
                (params, KeyTable::Seeds(seeds))
            }
        };
        Ok(Self::assemble(config, params, keys))
    }

    fn assemble(config: DealerConfig, params: GroupParams, keys: KeyTable) -> Self {
        let (verifier, trees) = match config.level {
            ProtocolLevel::ZeroSum | ProtocolLevel::LossResilient => (Verifier::Open, None),
            ProtocolLevel::Verified => {
                let commitments = (0..config.n)
                    .into_par_iter()
                    .map(|idx| {
                        let player = PlayerId::from_index(idx);
                        (1..=config.rounds).map(|j| keys.pair(&params, player, j).commitment(&params)).collect()
                    })
                    .collect();
                (Verifier::Commitments(commitments), None)
            }
            ProtocolLevel::MultiRound => {
                let trees = schedule::build_trees(&params, config.n, config.rounds, |i, j| keys.pair(&params, i, j));
                (Verifier::Roots(trees.iter().map(MerkleSchedule::root).collect()), Some(Arc::new(trees)))
            }
        };
        SetupBundle { config, params, keys: Arc::new(keys), trees, verifier }
    }

    pub fn to_file(&self) -> BundleFile {
        BundleFile {
            config: self.config,
            params: self.params.clone(),
            pads: PlayerId::all(self.config.n).map(|i| self.keys.pad_material(i)).collect(),
        }
    }

    pub fn from_file(file: BundleFile) -> Result<Self, SetupError> {
        let BundleFile { config, params, pads } = file;
        check_correspondents(&config)?;
        if !params.has_trapdoor() {
            return Err(SetupError::Inconsistent("bundle params lack the trapdoor".into()));
        }
        if pads.len() != config.n {
            return Err(SetupError::Inconsistent(format!("{} pads for {} players", pads.len(), config.n)));
        }
        let keys = if pads.iter().all(|p| matches!(p, PadMaterial::Seed(_))) {
            KeyTable::Seeds(
                pads.into_iter()
                    .map(|p| match p {
                        PadMaterial::Seed(s) => s,
                        PadMaterial::Explicit(_) => unreachable!(),
                    })
                    .collect(),
            )
        } else {
            let pairs = pads
                .iter()
                .enumerate()
                .map(|(idx, pad)| {
                    let player = PlayerId::from_index(idx);
                    (1..=config.rounds)
                        .map(|j| {
                            pad.pair(&params, player, j).ok_or_else(|| {
                                SetupError::Inconsistent(format!("{player} has no pad for round {j}"))
                            })
                        })
                        .collect::<Result<Vec<_>, _>>()
                })
                .collect::<Result<Vec<_>, _>>()?;
            KeyTable::Pairs(pairs)
        };
        Ok(Self::assemble(config, params, keys))
    }

    pub fn n(&self) -> usize {
        self.config.n
    }

    pub fn rounds(&self) -> u64 {
        self.config.rounds
    }

    pub fn level(&self) -> ProtocolLevel {
        self.config.level
    }

    pub fn correspondents(&self) -> (PlayerId, PlayerId) {
        self.config.correspondents
    }

    pub fn is_correspondent(&self, id: PlayerId) -> bool {
        let (a, b) = self.config.correspondents;
        id == a || id == b
    }

    pub fn pair(&self, player: PlayerId, round: u64) -> SecretPair {
        self.keys.pair(&self.params, player, round)
    }

    pub(crate) fn shared_keys(&self) -> Arc<KeyTable> {
        Arc::clone(&self.keys)
    }

    pub fn tree(&self, player: PlayerId) -> Option<&MerkleSchedule> {
        self.trees.as_ref().map(|t| &t[player.index()])
    }

    pub(crate) fn shared_trees(&self) -> Option<Arc<Vec<MerkleSchedule>>> {
        self.trees.clone()
    }

    pub fn verifier(&self) -> &Verifier {
        &self.verifier
    }

    pub fn player_view(&self, id: PlayerId) -> Result<PlayerView, SetupError> {
        if id.0 == 0 || usize::from(id.0) > self.config.n {
            return Err(SetupError::UnknownPlayer(id));
        }
        Ok(PlayerView {
            index: id,
            params: self.params.public(),
            level: self.config.level,
            rounds: self.config.rounds,
            pad: self.keys.pad_material(id),
        })
    }

    pub fn correspondent_view(&self, id: PlayerId) -> Result<CorrespondentView, SetupError> {
        let (a, b) = self.config.correspondents;
        let peer = match id {
            x if x == a => b,
            x if x == b => a,
            other => return Err(SetupError::NotCorrespondent(other)),
        };
        Ok(CorrespondentView {
            index: id,
            peer,
            params: self.params.clone(),
            level: self.config.level,
            rounds: self.config.rounds,
            pairs: self.keys.materialize(&self.params, self.config.rounds),
        })
    }

    pub fn aggregator_view(&self) -> AggregatorView {
        AggregatorView {
            params: self.params.public(),
            level: self.config.level,
            n: self.config.n,
            rounds: self.config.rounds,
            verifier: self.verifier.clone(),
        }
    }
}

fn check_correspondents(config: &DealerConfig) -> Result<(), SetupError> {
    let (a, b) = config.correspondents;
    let in_range = |p: PlayerId| p.0 >= 1 && usize::from(p.0) <= config.n;
    if a == b || !in_range(a) || !in_range(b) {
        return Err(SetupError::BadCorrespondents { a, b, n: config.n });
    }
    Ok(())
}

mod digest_list {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    use crate::merkle::Digest;

    pub fn serialize<S: Serializer>(v: &[Digest], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(hex::encode))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Digest>, D::Error> {
        Vec::<String>::deserialize(d)?
            .into_iter()
            .map(|s| {
                let bytes = hex::decode(&s).map_err(D::Error::custom)?;
                bytes.try_into().map_err(|_| D::Error::custom("digest must be 32 octets"))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(level: ProtocolLevel) -> DealerConfig {
        DealerConfig { n: 4, rounds: 6, level, correspondents: (PlayerId(1), PlayerId(3)), rng_seed: 5 }
    }

    #[test]
    fn zero_sum_bundle_sums_to_zero_every_round() {
        let b = SetupBundle::generate(&GroupParams::toy().public(), config(ProtocolLevel::ZeroSum)).unwrap();
        for j in 1..=6 {
            let keys: Vec<_> = PlayerId::all(4).map(|i| b.pair(i, j).k).collect();
            assert!(b.params.sum(&keys).is_zero());
        }
    }

    #[test]
    fn views_partition_information() {
        let b = SetupBundle::generate(&GroupParams::toy().public(), config(ProtocolLevel::MultiRound)).unwrap();
        let agg = b.aggregator_view();
        assert!(!agg.params.has_trapdoor());
        let Verifier::Roots(roots) = &agg.verifier else { panic!("expected roots") };
        assert_eq!(roots.len(), 4);
        let corr = b.correspondent_view(PlayerId(3)).unwrap();
        assert_eq!(corr.peer, PlayerId(1));
        assert!(corr.params.has_trapdoor());
        // Roots recomputed from the correspondent's pairs match the aggregator's.
        let trees = schedule::build_trees(&corr.params, 4, 6, |i, j| corr.pairs[i.index()][j as usize - 1].clone());
        assert_eq!(trees.iter().map(MerkleSchedule::root).collect::<Vec<_>>(), *roots);
        let view = b.player_view(PlayerId(2)).unwrap();
        assert!(!view.params.has_trapdoor());
        assert_eq!(b.correspondent_view(PlayerId(2)), Err(SetupError::NotCorrespondent(PlayerId(2))));
    }

    #[test]
    fn bundle_file_round_trip() {
        for level in ProtocolLevel::ALL {
            let b = SetupBundle::generate(&GroupParams::toy().public(), config(level)).unwrap();
            let json = serde_json::to_string(&b.to_file()).unwrap();
            let back = SetupBundle::from_file(serde_json::from_str(&json).unwrap()).unwrap();
            assert_eq!(back.aggregator_view(), b.aggregator_view());
            assert_eq!(back.correspondent_view(PlayerId(1)), b.correspondent_view(PlayerId(1)));
        }
    }

    #[test]
    fn rejects_bad_correspondents() {
        let mut cfg = config(ProtocolLevel::LossResilient);
        cfg.correspondents = (PlayerId(2), PlayerId(2));
        assert!(matches!(
            SetupBundle::generate(&GroupParams::toy(), cfg),
            Err(SetupError::BadCorrespondents { .. })
        ));
        cfg.correspondents = (PlayerId(2), PlayerId(5));
        assert!(SetupBundle::generate(&GroupParams::toy(), cfg).is_err());
    }
}
