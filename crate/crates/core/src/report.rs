//! Run summaries read off the traces, next to what the analytic models predict.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::perf;
use crate::protocol::{RejectReason, Verdict};
use crate::sim::{traffic_from_traces, LatencyModel, LossModel, Outcome, Rotation, RoundTrace, SimConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub model: f64,
    pub measured: f64,
    /// `(measured - model) / model`; `0` when both are zero.
    pub rel_delta: f64,
}

impl Comparison {
    pub fn new(model: f64, measured: f64) -> Self {
        let rel_delta = if model == 0.0 { if measured == 0.0 { 0.0 } else { f64::INFINITY } } else { (measured - model) / model };
        Comparison { model, measured, rel_delta }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub n: usize,
    pub rounds: u64,
    pub level: u8,
    pub variant: String,
    pub rotation: Rotation,
    /// Recovery outcomes summed over both correspondents.
    pub outcomes: BTreeMap<String, u64>,
    pub rejections: BTreeMap<String, u64>,
    pub packets_sent: u64,
    pub packets_lost: u64,
    pub packets_late: u64,
    pub lossfree_rounds: u64,
    /// Fraction of rounds in which every network packet arrived in time.
    pub lossfree: Comparison,
    /// Mean wait for the last in-time packet, milliseconds. The measured side
    /// is truncated at the deadline.
    pub last_arrival_ms: Option<Comparison>,
    /// Mean over players of received bits per second. Under rotation each
    /// player aggregates one round in `n`.
    pub player_bps_in: Comparison,
    pub player_bps_out: Comparison,
    /// Dedicated aggregator, or zeros under rotation.
    pub aggregator_bps_in: Comparison,
    pub flagged: Vec<u16>,
}

impl RunReport {
    pub fn count(&self, outcome: Outcome) -> u64 {
        self.outcomes.get(outcome.as_str()).copied().unwrap_or(0)
    }

    pub fn garbled(&self) -> u64 {
        self.count(Outcome::Garbled)
    }

    pub fn from_traces(cfg: &SimConfig, rounds: &[RoundTrace]) -> Self {
        let mut outcomes: BTreeMap<String, u64> = Outcome::ALL.iter().map(|o| (o.as_str().to_owned(), 0)).collect();
        let mut rejections: BTreeMap<String, u64> =
            RejectReason::ALL.iter().map(|r| (r.as_str().to_owned(), 0)).collect();
        let (mut sent, mut lost, mut late, mut lossfree_rounds) = (0u64, 0u64, 0u64, 0u64);
        let mut waits = Vec::new();
        let mut flagged = Vec::new();
        for r in rounds {
            for rec in &r.recoveries {
                *outcomes.entry(rec.outcome.as_str().to_owned()).or_default() += 1;
            }
            for rec in &r.players {
                if let Some(Verdict::Rejected(why)) = rec.verdict {
                    *rejections.entry(why.as_str().to_owned()).or_default() += 1;
                }
            }
            let c = r.counters;
            sent += u64::from(c.packets_sent);
            lost += u64::from(c.packets_lost);
            late += u64::from(c.packets_late);
            if c.packets_lost + c.packets_late == 0 {
                lossfree_rounds += 1;
            }
            if let Some(t) = r.last_arrival_us() {
                waits.push(t as f64 / 1e3);
            }
            flagged.extend(r.flagged.iter().map(|p| p.0));
        }
        flagged.sort_unstable();
        flagged.dedup();

        let senders = match cfg.rotation {
            Rotation::Fixed => cfg.n,
            Rotation::RoundRobin => cfg.n - 1,
        } as u32;
        let p_loss = match cfg.loss {
            LossModel::Bernoulli { p } => p,
            LossModel::GilbertElliott { p_gb, p_bg, e_good, e_bad } => perf::ge_stationary_loss(p_gb, p_bg, e_good, e_bad),
        };
        let total = rounds.len().max(1) as f64;
        let lossfree = Comparison::new(perf::lossfree_round_ratio(p_loss, senders), lossfree_rounds as f64 / total);
        let last_arrival_ms = match cfg.latency {
            LatencyModel::Lognormal { u, s, unit_ms } if !waits.is_empty() && senders > 0 => {
                let model = perf::LatencyModel { u, s, unit_ms }.expected_max_ms(senders);
                Some(Comparison::new(model, waits.iter().sum::<f64>() / waits.len() as f64))
            }
            LatencyModel::Fixed { ms } if !waits.is_empty() => Some(Comparison::new(ms, waits.iter().sum::<f64>() / waits.len() as f64)),
            _ => None,
        };

        let seconds = rounds.len() as f64 * cfg.period_us() / 1e6;
        let traffic = traffic_from_traces(rounds, cfg.n);
        let players = &traffic[1..];
        let mean = |f: &dyn Fn(&crate::sim::NodeTraffic) -> f64| players.iter().map(f).sum::<f64>() / players.len() as f64;
        let c = rounds.iter().flat_map(|r| r.players.iter()).map(|p| f64::from(p.bytes)).fold(0.0, f64::max);
        let b = rounds.iter().map(|r| f64::from(r.counters.broadcast_bytes)).fold(0.0, f64::max);
        let (nf, bits) = (cfg.n as f64, 8.0 * cfg.rate);
        let (model_in, model_out, model_agg) = match cfg.rotation {
            Rotation::Fixed => (bits * b, bits * c, bits * c * nf),
            Rotation::RoundRobin => {
                let each = (nf - 1.0) / nf * bits * (b + c);
                (each, each, 0.0)
            }
        };
        let secs = if seconds > 0.0 { seconds } else { 1.0 };
        RunReport {
            scenario: cfg.name.clone(),
            n: cfg.n,
            rounds: rounds.len() as u64,
            level: cfg.level.number(),
            variant: cfg.variant.to_string(),
            rotation: cfg.rotation,
            outcomes,
            rejections,
            packets_sent: sent,
            packets_lost: lost,
            packets_late: late,
            lossfree_rounds,
            lossfree,
            last_arrival_ms,
            player_bps_in: Comparison::new(model_in, mean(&|t| t.bps_in(secs))),
            player_bps_out: Comparison::new(model_out, mean(&|t| t.bps_out(secs))),
            aggregator_bps_in: Comparison::new(model_agg, traffic[0].bps_in(secs)),
            flagged,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{run_simulation, GroupChoice};
    use crate::ProtocolLevel;

    #[test]
    fn clean_run_report() {
        let cfg = SimConfig {
            n: 4,
            rounds: 100,
            level: ProtocolLevel::Verified,
            group: GroupChoice::Toy,
            latency: LatencyModel::Fixed { ms: 20.0 },
            packet_bytes: Some(100),
            ..SimConfig::default()
        };
        let out = run_simulation(&cfg, &cfg.bundle().unwrap()).unwrap();
        let rep = RunReport::from_traces(&cfg, &out.rounds);
        assert_eq!(rep.count(Outcome::Correct), 200);
        assert_eq!(rep.garbled(), 0);
        assert_eq!(rep.lossfree_rounds, 100);
        assert_eq!(rep.lossfree.rel_delta, 0.0);
        assert!((rep.last_arrival_ms.unwrap().measured - 20.0).abs() < 1e-9);
        assert!(rep.player_bps_out.rel_delta.abs() < 1e-9, "{:?}", rep.player_bps_out);
        assert!(rep.aggregator_bps_in.rel_delta.abs() < 1e-9, "{:?}", rep.aggregator_bps_in);
        assert!(rep.rejections.values().all(|&v| v == 0));

        let rot = SimConfig { rotation: Rotation::RoundRobin, rounds: 40, ..cfg };
        let out = run_simulation(&rot, &rot.bundle().unwrap()).unwrap();
        let rep = RunReport::from_traces(&rot, &out.rounds);
        assert!((rep.player_bps_in.model - 3.0 / 4.0 * 400.0 * 200.0).abs() < 1e-6);
        assert!(rep.player_bps_in.rel_delta.abs() < 1e-9, "{:?}", rep.player_bps_in);
        assert!(rep.player_bps_out.rel_delta.abs() < 1e-9, "{:?}", rep.player_bps_out);
    }
}
