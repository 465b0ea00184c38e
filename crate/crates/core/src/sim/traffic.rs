//! Per-node packet and byte counts.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::channel::{Links, LossModel};
use super::config::Rotation;
use super::engine::rotate_aggregator;
use super::trace::RoundTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct NodeTraffic {
    /// `0` is the dedicated aggregator.
    pub node: u16,
    pub pkts_in: u64,
    pub pkts_out: u64,
    pub bytes_in: u64,
    pub bytes_out: u64,
}

impl NodeTraffic {
    pub fn pps_in(&self, seconds: f64) -> f64 {
        self.pkts_in as f64 / seconds
    }

    pub fn pps_out(&self, seconds: f64) -> f64 {
        self.pkts_out as f64 / seconds
    }

    pub fn bps_in(&self, seconds: f64) -> f64 {
        8.0 * self.bytes_in as f64 / seconds
    }

    pub fn bps_out(&self, seconds: f64) -> f64 {
        8.0 * self.bytes_out as f64 / seconds
    }
}

/// Counts for nodes `0..=n`, read off the traces. Late packets count as received.
pub fn traffic_from_traces(rounds: &[RoundTrace], n: usize) -> Vec<NodeTraffic> {
    let mut nodes: Vec<NodeTraffic> = (0..=n).map(|i| NodeTraffic { node: i as u16, ..Default::default() }).collect();
    for r in rounds {
        let agg = r.aggregator.map_or(0, |p| usize::from(p.0));
        for rec in r.players.iter().filter(|rec| rec.sent_at_us.is_some() && !rec.local) {
            let bytes = u64::from(rec.bytes);
            let from = usize::from(rec.player.0);
            nodes[from].pkts_out += 1;
            nodes[from].bytes_out += bytes;
            if rec.arrived_at_us.is_some() {
                nodes[agg].pkts_in += 1;
                nodes[agg].bytes_in += bytes;
            }
        }
        let bytes = u64::from(r.counters.broadcast_bytes);
        for b in &r.broadcast {
            nodes[agg].pkts_out += 1;
            nodes[agg].bytes_out += bytes;
            if b.arrived_at_us.is_some() {
                let to = usize::from(b.to.0);
                nodes[to].pkts_in += 1;
                nodes[to].bytes_in += bytes;
            }
        }
    }
    nodes
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrafficConfig {
    pub n: usize,
    pub rounds: u64,
    pub rate: f64,
    pub rotation: Rotation,
    pub packet_bytes: u32,
    pub loss: LossModel,
    pub broadcast_loss: bool,
    pub rng_seed: u64,
}

/// Packet flow alone, no cryptography; valid for any `n >= 2`.
pub fn simulate_traffic(cfg: &TrafficConfig) -> Vec<NodeTraffic> {
    assert!(cfg.n >= 2, "traffic needs at least two players");
    let n = cfg.n;
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.rng_seed);
    let mut links = Links::new(cfg.loss, n + 1);
    let mut nodes: Vec<NodeTraffic> = (0..=n).map(|i| NodeTraffic { node: i as u16, ..Default::default() }).collect();
    let bytes = u64::from(cfg.packet_bytes);
    for j in 1..=cfg.rounds {
        let agg = match cfg.rotation {
            Rotation::Fixed => 0,
            Rotation::RoundRobin => usize::from(rotate_aggregator(j, n).0),
        };
        for p in (1..=n).filter(|&p| p != agg) {
            nodes[p].pkts_out += 1;
            nodes[p].bytes_out += bytes;
            if !links.lost(p, agg, &mut rng) {
                nodes[agg].pkts_in += 1;
                nodes[agg].bytes_in += bytes;
            }
        }
        for p in (1..=n).filter(|&p| p != agg) {
            nodes[agg].pkts_out += 1;
            nodes[agg].bytes_out += bytes;
            if !(cfg.broadcast_loss && links.lost(agg, p, &mut rng)) {
                nodes[p].pkts_in += 1;
                nodes[p].bytes_in += bytes;
            }
        }
    }
    nodes
}
