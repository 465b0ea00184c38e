//! Who is talking? An observer sees every commitment, collection packet and
//! broadcast of a round and guesses the correspondent pair.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::group::{GroupParams, Scalar};
use crate::protocol::{Aggregator, CollectionPacket, Player};
use crate::setup::{DealerConfig, SetupBundle, SetupError};
use crate::{PlayerId, ProtocolLevel, Variant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Observer {
    /// Sees the transcript only; guesses the two largest openings.
    Transcript,
    /// Additionally holds every pad, as a correspondent does.
    FullKnowledge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyReport {
    pub n: usize,
    pub trials: u64,
    pub observer: Observer,
    pub correct: u64,
    pub accuracy: f64,
    /// `1 / c`, `c = |H| (|H| - 1) / 2`.
    pub chance: f64,
    /// Binomial standard deviation of the accuracy at chance.
    pub sigma: f64,
    pub z: f64,
}

impl PrivacyReport {
    pub fn within_sigmas(&self, k: f64) -> bool {
        (self.accuracy - self.chance).abs() <= k * self.sigma
    }
}

/// One round's public view.
pub struct View<'a> {
    pub commitments: &'a [crate::group::Commitment],
    pub packets: &'a [CollectionPacket],
    pub members: &'a [PlayerId],
    pub sum: &'a Scalar,
}

fn guess_transcript(view: &View<'_>) -> (PlayerId, PlayerId) {
    let mut order: Vec<&CollectionPacket> = view.packets.iter().collect();
    order.sort_by(|x, y| y.value.cmp(&x.value).then(x.sender.cmp(&y.sender)));
    let (a, b) = (order[0].sender, order[1].sender);
    (a.min(b), a.max(b))
}

/// Runs `trials` independent single-round Protocol 3 setups with a uniformly
/// drawn unordered pair; every player is honest.
pub fn run_privacy_experiment(
    params: &GroupParams,
    n: usize,
    trials: u64,
    observer: Observer,
    seed: u64,
) -> Result<PrivacyReport, SetupError> {
    let results: Vec<bool> = (0..trials)
        .into_par_iter()
        .map(|t| trial(params, n, observer, seed, t))
        .collect::<Result<_, _>>()?;
    let correct = results.iter().filter(|&&x| x).count() as u64;
    let c = (n * (n - 1) / 2) as f64;
    let chance = 1.0 / c;
    let sigma = (chance * (1.0 - chance) / trials as f64).sqrt();
    let accuracy = correct as f64 / trials as f64;
    Ok(PrivacyReport { n, trials, observer, correct, accuracy, chance, sigma, z: (accuracy - chance) / sigma })
}

fn trial(params: &GroupParams, n: usize, observer: Observer, seed: u64, t: u64) -> Result<bool, SetupError> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(t);
    let pick = sample(&mut rng, n, 2);
    let (x, y) = (PlayerId::from_index(pick.index(0)), PlayerId::from_index(pick.index(1)));
    let pair = (x.min(y), x.max(y));
    let cfg = DealerConfig { n, rounds: 1, level: ProtocolLevel::Verified, correspondents: pair, rng_seed: rng.random() };
    let bundle = SetupBundle::generate(&params.public(), cfg)?;
    let mut agg = Aggregator::new(bundle.aggregator_view(), Variant::List);
    agg.open_round(1);
    let mut packets = Vec::with_capacity(n);
    for id in PlayerId::all(n) {
        let mut p = Player::from_bundle(&bundle, id, Variant::List).expect("valid player");
        if bundle.is_correspondent(id) {
            p.stage_message(bundle.params.random_nonzero_scalar(&mut rng)).expect("correspondent");
        }
        let pkt = p.emit(1).expect("round 1");
        agg.ingest(&pkt);
        packets.push(pkt);
    }
    let bc = agg.finalize(1);
    let guess = match observer {
        Observer::Transcript => {
            let commitments: Vec<_> = match bundle.verifier() {
                crate::setup::Verifier::Commitments(cs) => cs.iter().map(|row| row[0].clone()).collect(),
                _ => unreachable!("level 3 commits"),
            };
            let members: Vec<PlayerId> = bc.members.iter().flatten().copied().collect();
            guess_transcript(&View { commitments: &commitments, packets: &packets, members: &members, sum: &bc.sum })
        }
        Observer::FullKnowledge => {
            let odd: Vec<PlayerId> =
                packets.iter().filter(|p| p.value != bundle.pair(p.sender, 1).k).map(|p| p.sender).collect();
            match odd.as_slice() {
                [a, b] => (*a.min(b), *a.max(b)),
                _ => (PlayerId(0), PlayerId(0)),
            }
        }
    };
    Ok(guess == pair)
}

/// Counts of `(O, s)` over `trials` fresh single-round setups, for the
/// player at index 0 when it is a bystander (`m = None`) or a correspondent
/// sending `m`. Cell `O * q + s`; the group order must be small.
pub fn opening_histogram(params: &GroupParams, m: Option<u64>, trials: u64, seed: u64) -> Vec<u64> {
    let q = params.q().to_u64_digits().first().copied().unwrap_or(0) as usize;
    assert!(params.q().bits() <= 16, "histogram needs a small group");
    let counts = (0..trials)
        .into_par_iter()
        .fold(
            || vec![0u64; q * q],
            |mut acc, t| {
                let mut rng = ChaCha20Rng::seed_from_u64(seed);
                rng.set_stream(t);
                let correspondents = if m.is_some() { (PlayerId(1), PlayerId(2)) } else { (PlayerId(2), PlayerId(3)) };
                let cfg = DealerConfig {
                    n: 3,
                    rounds: 1,
                    level: ProtocolLevel::Verified,
                    correspondents,
                    rng_seed: rng.random(),
                };
                let bundle = SetupBundle::generate(&params.public(), cfg).expect("valid setup");
                let mut p = Player::from_bundle(&bundle, PlayerId(1), Variant::List).expect("player");
                if let Some(m) = m {
                    p.stage_message(bundle.params.scalar(m)).expect("correspondent");
                }
                let pkt = p.emit(1).expect("round 1");
                let o = pkt.value.low_u64() as usize;
                let s = pkt.blind.expect("level 3").low_u64() as usize;
                acc[o * q + s] += 1;
                acc
            },
        )
        .reduce(|| vec![0u64; q * q], |a, b| a.iter().zip(&b).map(|(x, y)| x + y).collect());
    counts
}

/// p-value of the chi-square test that two histograms share one distribution.
pub fn chi_square_homogeneity(a: &[u64], b: &[u64]) -> f64 {
    let (na, nb) = (a.iter().sum::<u64>() as f64, b.iter().sum::<u64>() as f64);
    let total = na + nb;
    let mut stat = 0.0;
    let mut cells = 0usize;
    for (&x, &y) in a.iter().zip(b) {
        let col = (x + y) as f64;
        if col == 0.0 {
            continue;
        }
        cells += 1;
        for (obs, n) in [(x as f64, na), (y as f64, nb)] {
            let e = n * col / total;
            stat += (obs - e).powi(2) / e;
        }
    }
    let df = (cells.max(2) - 1) as f64;
    1.0 - ChiSquared::new(df).expect("df > 0").cdf(stat)
}

/// p-value of the chi-square goodness-of-fit test against the uniform law.
pub fn chi_square_uniform(counts: &[u64]) -> f64 {
    let n = counts.iter().sum::<u64>() as f64;
    let e = n / counts.len() as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
    1.0 - ChiSquared::new((counts.len() - 1) as f64).expect("df > 0").cdf(stat)
}
