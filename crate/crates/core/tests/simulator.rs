use dcstream::protocol::{RejectReason, Verdict};
use dcstream::sim::{
    rotate_aggregator, run_simulation, traffic_from_traces, AdversarySpec, GroupChoice, LatencyModel, LossModel,
    Outcome, Rotation, SimConfig, SimError, Strategy,
};
use dcstream::{PlayerId, ProtocolLevel, Variant};

fn base(level: ProtocolLevel, n: usize, rounds: u64) -> SimConfig {
    SimConfig {
        n,
        rounds,
        level,
        group: GroupChoice::Toy,
        latency: LatencyModel::Fixed { ms: 30.0 },
        deadline_ms: 100.0,
        rng_seed: 11,
        ..SimConfig::default()
    }
}

fn run(cfg: &SimConfig) -> Vec<dcstream::RoundTrace> {
    let bundle = cfg.bundle().unwrap();
    run_simulation(cfg, &bundle).unwrap().rounds
}

#[test]
fn lossless_rounds_recover_everything() {
    for level in ProtocolLevel::ALL {
        let cfg = base(level, 5, 200);
        for r in run(&cfg) {
            assert_eq!(r.members.len(), 5);
            assert_eq!(r.outcome(PlayerId(1)), Some(Outcome::Correct));
            assert_eq!(r.outcome(PlayerId(2)), Some(Outcome::Correct));
        }
    }
}

#[test]
fn total_loss_empties_every_round() {
    let cfg = SimConfig { loss: LossModel::Bernoulli { p: 1.0 }, broadcast_loss: false, ..base(ProtocolLevel::MultiRound, 4, 50) };
    for r in run(&cfg) {
        assert!(r.members.is_empty());
        assert_eq!(r.outcome(PlayerId(1)), Some(Outcome::PeerAbsent));
        assert_eq!(r.outcome(PlayerId(2)), Some(Outcome::PeerAbsent));
    }
}

#[test]
fn conservation_and_deadline() {
    let cfg = SimConfig {
        latency: LatencyModel::Lognormal { u: 0.0, s: 0.5, unit_ms: 100.0 },
        deadline_ms: 120.0,
        loss: LossModel::Bernoulli { p: 0.1 },
        ..base(ProtocolLevel::Verified, 6, 500)
    };
    let rounds = run(&cfg);
    let mut late = 0;
    for r in &rounds {
        let c = r.counters;
        assert_eq!(c.packets_sent, c.packets_delivered + c.packets_lost + c.packets_late);
        late += c.packets_late;
        for rec in &r.players {
            if let Some(t) = rec.arrived_at_us {
                if t > r.deadline_us {
                    assert_eq!(rec.verdict, Some(Verdict::Rejected(RejectReason::LateArrival)));
                    assert!(!r.is_member(rec.player));
                }
            }
        }
    }
    assert!(late > 0);
}

#[test]
fn rotation_serves_each_player_equally() {
    assert_eq!(rotate_aggregator(1, 5), PlayerId(1));
    assert_eq!(rotate_aggregator(6, 5), PlayerId(1));
    let cfg = SimConfig { rotation: Rotation::RoundRobin, ..base(ProtocolLevel::LossResilient, 5, 15) };
    let rounds = run(&cfg);
    let mut served = [0; 5];
    for r in &rounds {
        served[r.aggregator.unwrap().index()] += 1;
        assert_eq!(r.members.len(), 5);
        assert_eq!(r.counters.packets_sent, 4);
        assert_eq!(r.outcome(PlayerId(1)), Some(Outcome::Correct));
        assert_eq!(r.outcome(PlayerId(2)), Some(Outcome::Correct));
    }
    assert_eq!(served, [3; 5]);
}

#[test]
fn verified_levels_contain_adversaries() {
    for level in [ProtocolLevel::Verified, ProtocolLevel::MultiRound] {
        let adversaries = vec![
            AdversarySpec { player: PlayerId(3), strategy: Strategy::RandomOpening },
            AdversarySpec { player: PlayerId(4), strategy: Strategy::ReplayedOpening },
            AdversarySpec { player: PlayerId(5), strategy: Strategy::WrongRoundProof },
            AdversarySpec { player: PlayerId(6), strategy: Strategy::DropSilently },
        ];
        let cfg = SimConfig { adversaries, group: GroupChoice::Default, ..base(level, 7, 300) };
        for r in run(&cfg) {
            assert_eq!(r.members, vec![PlayerId(1), PlayerId(2), PlayerId(7)]);
            assert_eq!(r.outcome(PlayerId(1)), Some(Outcome::Correct));
            assert_eq!(r.outcome(PlayerId(2)), Some(Outcome::Correct));
            assert_eq!(r.players[5].sent_at_us, None);
        }
    }
}

#[test]
fn unverified_level_is_garbled() {
    let adversaries = vec![AdversarySpec { player: PlayerId(3), strategy: Strategy::RandomOpening }];
    let cfg = SimConfig { adversaries, group: GroupChoice::Default, ..base(ProtocolLevel::LossResilient, 4, 200) };
    let rounds = run(&cfg);
    let garbled = rounds.iter().filter(|r| r.outcome(PlayerId(1)) == Some(Outcome::Garbled)).count();
    assert_eq!(garbled, 200);
}

#[test]
fn optimistic_audit_bans_the_disruptor() {
    let adversaries = vec![AdversarySpec { player: PlayerId(4), strategy: Strategy::RandomOpening }];
    let cfg = SimConfig {
        adversaries,
        group: GroupChoice::Default,
        variant: Variant::Optimistic,
        ..base(ProtocolLevel::MultiRound, 5, 100)
    };
    let bundle = cfg.bundle().unwrap();
    let rounds = run_simulation(&cfg, &bundle).unwrap().rounds;
    let first_flag = rounds.iter().position(|r| !r.flagged.is_empty()).expect("audit happened");
    assert_eq!(rounds[first_flag].flagged, vec![PlayerId(4)]);
    let last = rounds.last().unwrap();
    assert_eq!(last.players[3].verdict, Some(Verdict::Rejected(RejectReason::Banned)));
    assert_eq!(last.outcome(PlayerId(1)), Some(Outcome::Correct));
    assert!(rounds.iter().all(|r| r.flagged.iter().all(|p| *p == PlayerId(4))));
}

#[test]
fn no_list_variant_recovers_under_loss() {
    let cfg = SimConfig {
        group: GroupChoice::Default,
        variant: Variant::NoList,
        loss: LossModel::Bernoulli { p: 0.05 },
        broadcast_loss: false,
        max_missing: 2,
        ..base(ProtocolLevel::Verified, 6, 300)
    };
    for r in run(&cfg) {
        let missing = 6 - r.members.len();
        let o = r.outcome(PlayerId(1)).unwrap();
        if missing <= 2 {
            assert!(matches!(o, Outcome::Correct | Outcome::PeerAbsent), "round {}: {o}", r.round);
            assert_eq!(o == Outcome::PeerAbsent, !r.is_member(PlayerId(2)));
        } else {
            assert_eq!(o, Outcome::Undecodable);
        }
    }
}

#[test]
fn toy_group_refuses_framed_variants() {
    let cfg = SimConfig { variant: Variant::NoList, ..base(ProtocolLevel::Verified, 4, 5) };
    let bundle = cfg.bundle().unwrap();
    assert!(matches!(run_simulation(&cfg, &bundle), Err(SimError::ConfigMismatch(_))));
    let other = base(ProtocolLevel::Verified, 5, 5);
    assert!(matches!(run_simulation(&other, &bundle), Err(SimError::ConfigMismatch(_))));
}

#[test]
fn identical_seeds_identical_traces() {
    let cfg = SimConfig {
        latency: LatencyModel::default(),
        loss: LossModel::GilbertElliott { p_gb: 0.05, p_bg: 0.4, e_good: 0.0, e_bad: 1.0 },
        transcript: true,
        ..base(ProtocolLevel::MultiRound, 5, 200)
    };
    let render = |cfg: &SimConfig| {
        let bundle = cfg.bundle().unwrap();
        let out = run_simulation(cfg, &bundle).unwrap();
        let mut buf = Vec::new();
        dcstream::sim::trace::write_jsonl(&mut buf, &out.rounds).unwrap();
        dcstream::protocol::transcript::write_jsonl(&mut buf, &out.events).unwrap();
        buf
    };
    let a = render(&cfg);
    assert_eq!(a, render(&cfg));
    assert_ne!(a, render(&SimConfig { rng_seed: 12, ..cfg.clone() }));
}

#[test]
fn traced_traffic_matches_counters() {
    let cfg = SimConfig { packet_bytes: Some(100), rotation: Rotation::RoundRobin, ..base(ProtocolLevel::LossResilient, 4, 40) };
    let rounds = run(&cfg);
    let t = traffic_from_traces(&rounds, 4);
    assert_eq!(t[0].pkts_in + t[0].pkts_out, 0);
    for node in &t[1..] {
        assert_eq!(node.pkts_in, 30 + 30);
        assert_eq!(node.pkts_out, 30 + 30);
        assert_eq!(node.bytes_in, 6000);
    }
}

#[test]
fn random_openings_rejected_every_round() {
    for (level, why) in [(ProtocolLevel::Verified, RejectReason::BadOpening), (ProtocolLevel::MultiRound, RejectReason::BadProof)] {
        let adversaries = vec![AdversarySpec { player: PlayerId(3), strategy: Strategy::RandomOpening }];
        let cfg = SimConfig { adversaries, group: GroupChoice::Default, ..base(level, 4, 1000) };
        let rounds = run(&cfg);
        assert!(rounds.iter().all(|r| r.players[2].verdict == Some(Verdict::Rejected(why))));
        assert!(rounds.iter().all(|r| r.outcome(PlayerId(1)) == Some(Outcome::Correct)));
    }
}
