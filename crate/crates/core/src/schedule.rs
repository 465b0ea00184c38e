//! Per-round pad derivation and the dealer's key setups.
//!
//! Pads `(k, r)` for player `i` in round `j` come from a counter-mode PRF:
//! `SHA-256(tag || seed || i || j || lane || counter)`, rejection-sampled into
//! `[0, q)`. The `k` and `r` lanes are separated by the lane byte.

use std::fmt;

use rand::RngCore;
use rand_chacha::ChaCha20Rng;
use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::group::{Commitment, GroupParams, Scalar};
use crate::merkle::{hash_leaf, Digest, MerkleSchedule};
use crate::PlayerId;

const PRF_TAG: &[u8] = b"dcstream/pad/v1";
const LANE_K: u8 = 0x4b;
const LANE_R: u8 = 0x52;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("need at least 3 players, got {0}")]
    TooFewPlayers(usize),
    #[error("{n} players do not fit a group of order {q}")]
    GroupTooSmall { n: usize, q: String },
    #[error("round count must be at least 1")]
    NoRounds,
    #[error("round {round} outside 1..={rounds}")]
    RoundOutOfRange { round: u64, rounds: u64 },
}

/// 32-octet secret seed.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Seed(pub [u8; 32]);

impl Seed {
    pub fn random<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut bytes = [0u8; 32];
        rng.fill_bytes(&mut bytes);
        Seed(bytes)
    }
}

impl fmt::Debug for Seed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Seed({}..)", hex::encode(&self.0[..4]))
    }
}

impl Serialize for Seed {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(self.0))
    }
}

impl<'de> Deserialize<'de> for Seed {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let s = String::deserialize(d)?;
        let bytes = hex::decode(&s).map_err(D::Error::custom)?;
        let arr: [u8; 32] = bytes.try_into().map_err(|_| D::Error::custom("seed must be 32 octets"))?;
        Ok(Seed(arr))
    }
}

/// One round's pad `k` and commitment blinding `r`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SecretPair {
    pub k: Scalar,
    pub r: Scalar,
}

impl SecretPair {
    pub fn commitment(&self, params: &GroupParams) -> Commitment {
        params.commit(&self.k, &self.r)
    }
}

struct PrfStream<'a> {
    seed: &'a Seed,
    player: PlayerId,
    round: u64,
    lane: u8,
    counter: u32,
    block: [u8; 32],
    used: usize,
}

impl<'a> PrfStream<'a> {
    fn new(seed: &'a Seed, player: PlayerId, round: u64, lane: u8) -> Self {
        PrfStream { seed, player, round, lane, counter: 0, block: [0; 32], used: 32 }
    }

    fn fill(&mut self, out: &mut [u8]) {
        for byte in out {
            if self.used == 32 {
                let mut h = Sha256::new();
                h.update(PRF_TAG);
                h.update(self.seed.0);
                h.update(self.player.0.to_be_bytes());
                h.update(self.round.to_be_bytes());
                h.update([self.lane]);
                h.update(self.counter.to_be_bytes());
                self.block = h.finalize().into();
                self.counter += 1;
                self.used = 0;
            }
            *byte = self.block[self.used];
            self.used += 1;
        }
    }
}

/// Deterministic pad for `(player, round)`.
pub fn derive_pair(params: &GroupParams, seed: &Seed, player: PlayerId, round: u64) -> SecretPair {
    debug_assert!(round >= 1);
    let mut k_lane = PrfStream::new(seed, player, round, LANE_K);
    let mut r_lane = PrfStream::new(seed, player, round, LANE_R);
    SecretPair {
        k: params.sample_scalar(|buf| k_lane.fill(buf)),
        r: params.sample_scalar(|buf| r_lane.fill(buf)),
    }
}

/// `-(k_1 + ... + k_{n-1}) mod q`, the key that closes a zero-sum set.
pub fn complete_zero_sum(params: &GroupParams, partial: &[Scalar]) -> Scalar {
    params.neg(&params.sum(partial))
}

/// `n` keys with the first `n - 1` uniform and the last closing the sum to 0.
pub fn dealer_setup_zero_sum<R: RngCore + ?Sized>(
    params: &GroupParams,
    n: usize,
    rng: &mut R,
) -> Result<Vec<Scalar>, ScheduleError> {
    if n < 3 {
        return Err(ScheduleError::TooFewPlayers(n));
    }
    if num_bigint::BigUint::from(n) > *params.q() {
        return Err(ScheduleError::GroupTooSmall { n, q: params.q().to_string() });
    }
    let mut keys: Vec<Scalar> = (0..n - 1).map(|_| params.random_scalar(rng)).collect();
    keys.push(complete_zero_sum(params, &keys));
    Ok(keys)
}

/// Output of the multi-round dealer.
#[derive(Debug, Clone)]
pub struct StreamSetup {
    /// Parameters including the trapdoor; hand `public()` to non-correspondents.
    pub params: GroupParams,
    pub rounds: u64,
    /// `seeds[i - 1]` belongs to player `i`.
    pub seeds: Vec<Seed>,
    /// `pairs[i - 1][j - 1]`, the correspondents' view.
    pub pairs: Vec<Vec<SecretPair>>,
    pub trees: Vec<MerkleSchedule>,
}

impl StreamSetup {
    /// The aggregator's view: one root per player.
    pub fn roots(&self) -> Vec<Digest> {
        self.trees.iter().map(MerkleSchedule::root).collect()
    }
}

/// Draws a trapdoor (unless `params` already carries one), a seed per player,
/// and builds each player's tree over its `rounds` commitments.
pub fn dealer_setup_stream(
    params: &GroupParams,
    n: usize,
    rounds: u64,
    rng_seed: u64,
) -> Result<StreamSetup, ScheduleError> {
    let (params, seeds) = stream_seeds(params, n, rounds, rng_seed)?;
    let pairs = derive_all(&params, &seeds, rounds);
    let trees = build_trees(&params, n, rounds, |i, j| pairs[i.index()][j as usize - 1].clone());
    Ok(StreamSetup { params, rounds, seeds, pairs, trees })
}

/// `pairs[i - 1][j - 1]` for every seed.
pub fn derive_all(params: &GroupParams, seeds: &[Seed], rounds: u64) -> Vec<Vec<SecretPair>> {
    seeds
        .par_iter()
        .enumerate()
        .map(|(idx, seed)| {
            let player = PlayerId::from_index(idx);
            (1..=rounds).map(|j| derive_pair(params, seed, player, j)).collect()
        })
        .collect()
}

/// Trapdoor and one seed per player.
pub(crate) fn stream_seeds(
    params: &GroupParams,
    n: usize,
    rounds: u64,
    rng_seed: u64,
) -> Result<(GroupParams, Vec<Seed>), ScheduleError> {
    if n < 3 {
        return Err(ScheduleError::TooFewPlayers(n));
    }
    if rounds == 0 {
        return Err(ScheduleError::NoRounds);
    }
    let mut rng = ChaCha20Rng::seed_from_u64(rng_seed);
    let params = with_fresh_trapdoor(params, &mut rng);
    let seeds = (0..n).map(|_| Seed::random(&mut rng)).collect();
    Ok((params, seeds))
}

pub(crate) fn with_fresh_trapdoor<R: RngCore + ?Sized>(params: &GroupParams, rng: &mut R) -> GroupParams {
    if params.has_trapdoor() {
        params.clone()
    } else {
        let alpha = params.random_nonzero_scalar(rng);
        params.rekeyed(alpha).expect("rekeying a valid group with a nonzero trapdoor")
    }
}

/// One commitment tree per player over rounds `1..=rounds`.
pub fn build_trees<F>(params: &GroupParams, n: usize, rounds: u64, pair: F) -> Vec<MerkleSchedule>
where
    F: Fn(PlayerId, u64) -> SecretPair + Sync,
{
    (0..n)
        .into_par_iter()
        .map(|idx| {
            let player = PlayerId::from_index(idx);
            let digests = (1..=rounds).map(|j| hash_leaf(params, &pair(player, j).commitment(params))).collect();
            MerkleSchedule::from_leaf_digests(params, digests).expect("rounds >= 1")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    struct ZeroRng;

    impl RngCore for ZeroRng {
        fn next_u32(&mut self) -> u32 {
            0
        }
        fn next_u64(&mut self) -> u64 {
            0
        }
        fn fill_bytes(&mut self, dst: &mut [u8]) {
            dst.fill(0)
        }
    }

    #[test]
    fn derivation_is_deterministic_and_round_separated() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let base = GroupParams::toy();
        let big = GroupParams::random_default_256(&mut rng);
        for params in [&base, &big] {
            let seed = Seed::random(&mut rng);
            let a = derive_pair(params, &seed, PlayerId(2), 5);
            assert_eq!(a, derive_pair(params, &seed, PlayerId(2), 5));
        }
        let seed = Seed::random(&mut rng);
        let mut distinct = HashSet::new();
        for j in 1..=10_000u64 {
            let pair = derive_pair(&big, &seed, PlayerId(1), j);
            assert_ne!(pair, derive_pair(&big, &seed, PlayerId(1), j + 1));
            distinct.insert(pair.k);
        }
        assert_eq!(distinct.len(), 10_000);
    }

    #[test]
    fn zero_sum_completion() {
        let g = GroupParams::toy();
        assert_eq!(complete_zero_sum(&g, &[g.scalar(3), g.scalar(5)]), g.scalar(3));
    }

    #[test]
    fn zero_sum_dealer() {
        let g = GroupParams::toy();
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        for n in 3..=11 {
            let keys = dealer_setup_zero_sum(&g, n, &mut rng).unwrap();
            assert_eq!(keys.len(), n);
            assert!(g.sum(&keys).is_zero());
        }
        assert_eq!(dealer_setup_zero_sum(&g, 3, &mut ZeroRng).unwrap(), vec![Scalar::zero(); 3]);
        assert!(matches!(dealer_setup_zero_sum(&g, 12, &mut rng), Err(ScheduleError::GroupTooSmall { .. })));
        assert_eq!(dealer_setup_zero_sum(&g, 2, &mut rng), Err(ScheduleError::TooFewPlayers(2)));
    }

    #[test]
    fn single_round_stream_roots_are_leaf_hashes() {
        let g = GroupParams::toy();
        let setup = dealer_setup_stream(&g, 4, 1, 42).unwrap();
        for (i, root) in setup.roots().iter().enumerate() {
            let c = setup.pairs[i][0].commitment(&setup.params);
            assert_eq!(*root, hash_leaf(&setup.params, &c));
        }
    }

    #[test]
    fn stream_views_are_consistent() {
        let g = GroupParams::toy().public();
        let setup = dealer_setup_stream(&g, 5, 6, 7).unwrap();
        assert!(setup.params.has_trapdoor());
        for (idx, seed) in setup.seeds.iter().enumerate() {
            let player = PlayerId::from_index(idx);
            for j in 1..=6u64 {
                let pair = derive_pair(&setup.params, seed, player, j);
                assert_eq!(pair, setup.pairs[idx][j as usize - 1]);
                let proof = setup.trees[idx].prove(j).unwrap();
                assert!(crate::merkle::verify_position(
                    &setup.params,
                    &setup.trees[idx].root(),
                    &pair.commitment(&setup.params),
                    j,
                    &proof
                ));
            }
            assert_eq!(setup.trees[idx].capacity(), 8);
        }
        let again = dealer_setup_stream(&g, 5, 6, 7).unwrap();
        assert_eq!(again.roots(), setup.roots());
        assert_eq!(again.params, setup.params);
    }
}
