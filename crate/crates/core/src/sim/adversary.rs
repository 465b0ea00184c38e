use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::protocol::CollectionPacket;
use crate::setup::SetupBundle;
use crate::{PlayerId, WireShape};

/// What a faulty bystander sends instead of its honest opening.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Uniform `O` and `s`, honest proof for the round.
    RandomOpening,
    /// The previous round's honest packet relabelled with the current round;
    /// round 1 replays round `J`.
    ReplayedOpening,
    /// The next round's opening and proof claimed for the current round;
    /// round `J` uses round 1.
    WrongRoundProof,
    /// Sends nothing.
    DropSilently,
}

impl Strategy {
    pub const ALL: [Strategy; 4] =
        [Strategy::RandomOpening, Strategy::ReplayedOpening, Strategy::WrongRoundProof, Strategy::DropSilently];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::RandomOpening => "random_opening",
            Strategy::ReplayedOpening => "replayed_opening",
            Strategy::WrongRoundProof => "wrong_round_proof",
            Strategy::DropSilently => "drop_silently",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Strategy::ALL
            .into_iter()
            .find(|x| x.as_str() == s.trim())
            .ok_or_else(|| format!("unknown strategy `{s}`"))
    }
}

fn opening_from(bundle: &SetupBundle, shape: WireShape, player: PlayerId, src: u64, round: u64) -> CollectionPacket {
    let pair = bundle.pair(player, src);
    CollectionPacket {
        round,
        sender: player,
        value: pair.k,
        blind: shape.blind.then_some(pair.r),
        proof: if shape.proof { bundle.tree(player).and_then(|t| t.prove(src).ok()) } else { None },
    }
}

/// The packet `player` sends in `round` under `strategy`, or `None`.
pub fn forge<R: RngCore + ?Sized>(
    strategy: Strategy,
    bundle: &SetupBundle,
    shape: WireShape,
    player: PlayerId,
    round: u64,
    rounds: u64,
    rng: &mut R,
) -> Option<CollectionPacket> {
    let g = &bundle.params;
    match strategy {
        Strategy::DropSilently => None,
        Strategy::RandomOpening => {
            let mut pkt = opening_from(bundle, shape, player, round, round);
            pkt.value = g.random_scalar(rng);
            if shape.blind {
                pkt.blind = Some(g.random_scalar(rng));
            }
            Some(pkt)
        }
        Strategy::ReplayedOpening => {
            let src = if round <= 1 { rounds } else { round - 1 };
            Some(opening_from(bundle, shape, player, src, round))
        }
        Strategy::WrongRoundProof => {
            let src = if round >= rounds { 1 } else { round + 1 };
            Some(opening_from(bundle, shape, player, src, round))
        }
    }
}
