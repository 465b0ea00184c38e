//! End-to-end acceptance run: one PASS/FAIL line per criterion, nonzero exit
//! if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use dcstream::group::GroupParams;
use dcstream::merkle::verify_position;
use dcstream::perf::{expected_max_latency, ge_stationary_loss, lossfree_round_ratio, LatencyModel as Model};
use dcstream::privacy::{run_privacy_experiment, Observer};
use dcstream::protocol::{Aggregator, Verdict};
use dcstream::schedule::complete_zero_sum;
use dcstream::setup::{DealerConfig, SetupBundle};
use dcstream::sim::{
    gilbert_elliott_step, run_simulation, simulate_traffic, traffic_from_traces, AdversarySpec, GeParams, GeState,
    GroupChoice, LatencyModel, LossModel, Outcome, Rotation, SimConfig, Strategy, TrafficConfig,
};
use dcstream::{CollectionPacket, MerkleSchedule, PlayerId, PositionProof, ProtocolLevel, RoundTrace, Variant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, LogNormal};
use rayon::prelude::*;

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn run(cfg: &SimConfig) -> Vec<RoundTrace> {
    let bundle = cfg.bundle().expect("setup");
    run_simulation(cfg, &bundle).expect("simulation").rounds
}

fn correctness() -> Check {
    let mut lines = Vec::new();
    let mut failures = 0u64;
    for group in [GroupChoice::Toy, GroupChoice::Default] {
        for level in ProtocolLevel::ALL {
            let cfg = SimConfig {
                n: 6,
                rounds: 10_000,
                level,
                group,
                latency: LatencyModel::Lognormal { u: 0.97, s: 0.06, unit_ms: 100.0 },
                loss: LossModel::Bernoulli { p: 0.02 },
                broadcast_loss: true,
                rng_seed: 100 + u64::from(level.number()),
                ..SimConfig::default()
            };
            let (a, b) = cfg.correspondents;
            let (mut checked, mut bad) = (0u64, 0u64);
            for r in run(&cfg) {
                // Zero-sum pads cancel only when every packet is in.
                let precondition = r.is_member(a) && r.is_member(b) && (level != ProtocolLevel::ZeroSum || r.lossfree(cfg.n));
                if !precondition {
                    continue;
                }
                for p in [a, b] {
                    match r.outcome(p) {
                        Some(Outcome::BroadcastLost) => {}
                        Some(Outcome::Correct) => checked += 1,
                        _ => {
                            checked += 1;
                            bad += 1;
                        }
                    }
                }
            }
            failures += bad;
            lines.push(format!("{group:?}/P{level}: {checked} recoveries, {bad} wrong"));
        }
    }
    ensure(failures == 0, lines.join("; "))
}

fn resilience() -> Check {
    let base = SimConfig {
        n: 10,
        rounds: 2000,
        group: GroupChoice::Default,
        latency: LatencyModel::Lognormal { u: 0.97, s: 0.06, unit_ms: 100.0 },
        loss: LossModel::Bernoulli { p: 0.01 },
        rng_seed: 77,
        ..SimConfig::default()
    };
    let strategies = [Strategy::RandomOpening, Strategy::ReplayedOpening, Strategy::WrongRoundProof];
    let adversaries: Vec<AdversarySpec> = (3..=9u16)
        .map(|i| AdversarySpec { player: PlayerId(i), strategy: strategies[usize::from(i) % 3] })
        .collect();
    let rate = |rounds: &[RoundTrace]| {
        let ok = rounds.iter().flat_map(|r| &r.recoveries).filter(|x| x.outcome == Outcome::Correct).count();
        ok as f64 / (2 * rounds.len()) as f64
    };
    let mut lines = Vec::new();
    let mut pass = true;
    for level in [ProtocolLevel::Verified, ProtocolLevel::MultiRound] {
        let clean = rate(&run(&SimConfig { level, ..base.clone() }));
        let hit = run(&SimConfig { level, adversaries: adversaries.clone(), ..base.clone() });
        let attacked = rate(&hit);
        let garbled = hit.iter().flat_map(|r| &r.recoveries).filter(|x| x.outcome == Outcome::Garbled).count();
        pass &= clean == attacked && garbled == 0;
        lines.push(format!("P{level}: baseline {clean:.4}, 7 adversaries {attacked:.4}, garbled {garbled}"));
    }
    let p2 = run(&SimConfig { level: ProtocolLevel::LossResilient, adversaries: adversaries.clone(), ..base.clone() });
    let (mut affected, mut garbled) = (0u64, 0u64);
    for r in &p2 {
        if !adversaries.iter().any(|a| r.is_member(a.player)) {
            continue;
        }
        for rec in &r.recoveries {
            if matches!(rec.outcome, Outcome::Correct | Outcome::Garbled) {
                affected += 1;
                garbled += u64::from(rec.outcome == Outcome::Garbled);
            }
        }
    }
    let frac = garbled as f64 / affected.max(1) as f64;
    pass &= affected > 0 && frac > 0.99;
    lines.push(format!("P2: {garbled}/{affected} affected recoveries garbled ({:.2}%)", 100.0 * frac));
    ensure(pass, lines.join("; "))
}

fn privacy() -> Check {
    let g = GroupParams::toy();
    let mut lines = Vec::new();
    let mut pass = true;
    for (n, seed) in [(3usize, 31u64), (5, 32), (10, 33)] {
        let r = run_privacy_experiment(&g, n, 10_000, Observer::Transcript, seed).expect("setup");
        pass &= r.within_sigmas(3.0);
        lines.push(format!("n={n}: {:.4} vs 1/{} = {:.4} (z={:+.2})", r.accuracy, n * (n - 1) / 2, r.chance, r.z));
    }
    let full = run_privacy_experiment(&g, 5, 1000, Observer::FullKnowledge, 34).expect("setup");
    pass &= full.correct == full.trials;
    lines.push(format!("full knowledge {:.3}", full.accuracy));
    ensure(pass, lines.join("; "))
}

fn latency() -> Check {
    let m = Model::default();
    let (u, s) = (m.u, m.s);
    let increase = m.expected_max_ms(100) - m.expected_max_ms(1);
    let dist = LogNormal::new(u, s).unwrap();
    let mut lines = vec![format!("E[max] increase n=1..100: {increase:.2} ms")];
    let mut pass = increase > 30.0;
    for n in [10u32, 100] {
        let trials = 1_000_000u64;
        let sum: f64 = (0..100u64)
            .into_par_iter()
            .map(|chunk| {
                let mut rng = ChaCha20Rng::seed_from_u64(4000 + u64::from(n));
                rng.set_stream(chunk);
                (0..trials / 100).map(|_| (0..n).map(|_| dist.sample(&mut rng)).fold(0.0, f64::max)).sum::<f64>()
            })
            .sum();
        let mc = sum / trials as f64;
        let quad = expected_max_latency(n, u, s);
        let rel = (quad - mc).abs() / mc;
        pass &= rel < 0.005;
        lines.push(format!("n={n}: quadrature {quad:.5} vs MC {mc:.5} ({:.3}%)", 100.0 * rel));
    }
    let mut csv = String::from("n,expected_max_ms\n");
    let mut prev = 0.0;
    let mut monotone = true;
    for n in 1..=1000u32 {
        let v = m.expected_max_ms(n);
        monotone &= v > prev;
        prev = v;
        csv.push_str(&format!("{n},{v:.6}\n"));
    }
    pass &= monotone && csv.lines().count() == 1001;
    lines.push(format!("curve n=1..1000 monotone: {monotone}"));
    ensure(pass, lines.join("; "))
}

fn loss() -> Check {
    let mut lines = Vec::new();
    let mut pass = true;
    let mut seed = 0;
    for p in [0.001, 0.01, 0.05] {
        for n in [10usize, 50, 100] {
            seed += 1;
            let cfg = SimConfig {
                n,
                rounds: 10_000,
                level: ProtocolLevel::LossResilient,
                group: GroupChoice::Default,
                latency: LatencyModel::Fixed { ms: 10.0 },
                loss: LossModel::Bernoulli { p },
                broadcast_loss: false,
                rotation: Rotation::Fixed,
                rng_seed: seed,
                ..SimConfig::default()
            };
            let rounds = run(&cfg);
            let clean = rounds.iter().filter(|r| r.lossfree(n)).count() as f64 / rounds.len() as f64;
            let model = lossfree_round_ratio(p, n as u32);
            pass &= (clean - model).abs() <= 0.01;
            let z = (clean - model) / (model * (1.0 - model) / 1e4).sqrt();
            lines.push(format!("p={p},n={n}: {clean:.4} vs {model:.4} (z={z:+.2})"));
        }
    }
    let ge = GeParams { p_gb: 0.05, p_bg: 0.25, e_good: 0.01, e_bad: 0.6 };
    let want = ge_stationary_loss(ge.p_gb, ge.p_bg, ge.e_good, ge.e_bad);
    let mut rng = ChaCha20Rng::seed_from_u64(600);
    let mut state = GeState::Good;
    let mut lost = 0u64;
    for _ in 0..1_000_000 {
        let (l, next) = gilbert_elliott_step(state, &ge, &mut rng);
        lost += u64::from(l);
        state = next;
    }
    let chain = lost as f64 / 1e6;
    let traffic = simulate_traffic(&TrafficConfig {
        n: 10,
        rounds: 100_000,
        rate: 50.0,
        rotation: Rotation::Fixed,
        packet_bytes: 100,
        loss: LossModel::GilbertElliott { p_gb: ge.p_gb, p_bg: ge.p_bg, e_good: ge.e_good, e_bad: ge.e_bad },
        broadcast_loss: false,
        rng_seed: 601,
    });
    let sent: u64 = traffic[1..].iter().map(|t| t.pkts_out).sum();
    let links = 1.0 - traffic[0].pkts_in as f64 / sent as f64;
    pass &= (chain - want).abs() <= 0.005 && (links - want).abs() <= 0.005;
    lines.push(format!("GE: chain {chain:.4}, simulated links {links:.4}, stationary {want:.4}"));
    ensure(pass, lines.join("; "))
}

fn bandwidth() -> Check {
    let cfg = SimConfig {
        n: 100,
        rounds: 500,
        rate: 50.0,
        level: ProtocolLevel::LossResilient,
        group: GroupChoice::Toy,
        latency: LatencyModel::Fixed { ms: 20.0 },
        packet_bytes: Some(100),
        rng_seed: 700,
        ..SimConfig::default()
    };
    let seconds = cfg.rounds as f64 / cfg.rate;
    let fixed = traffic_from_traces(&run(&cfg), cfg.n);
    let (pps, bps) = (fixed[0].pps_in(seconds), fixed[0].bps_in(seconds));
    let player_in = fixed[1..].iter().map(|t| t.bps_in(seconds)).sum::<f64>() / 100.0;
    let within = |x: f64, want: f64| (x - want).abs() <= 0.05 * want;
    let mut pass = within(pps, 5000.0) && within(bps, 4e6) && within(fixed[0].bps_out(seconds), 4e6);

    let rot_cfg = SimConfig { rotation: Rotation::RoundRobin, ..cfg.clone() };
    let rot = traffic_from_traces(&run(&rot_cfg), cfg.n);
    let players = &rot[1..];
    let (min_in, max_in) = players.iter().map(|t| t.bps_in(seconds)).fold((f64::MAX, 0.0f64), |(a, b), x| (a.min(x), b.max(x)));
    let (min_out, max_out) = players.iter().map(|t| t.bps_out(seconds)).fold((f64::MAX, 0.0f64), |(a, b), x| (a.min(x), b.max(x)));
    pass &= [min_in, max_in, min_out, max_out].iter().all(|&x| within(x, 80_000.0));
    let combined = (players.iter().map(|t| t.bps_in(seconds) + t.bps_out(seconds)).sum::<f64>()) / 100.0;
    ensure(
        pass,
        format!(
            "fixed: aggregator {pps:.0} pkt/s, {:.3} Mbps in, {:.3} Mbps out, players {:.1} kbps in; \
rotation per player: in {:.1}..{:.1} kbps, out {:.1}..{:.1} kbps (in+out {:.1} kbps)",
            bps / 1e6,
            fixed[0].bps_out(seconds) / 1e6,
            player_in / 1e3,
            min_in / 1e3,
            max_in / 1e3,
            min_out / 1e3,
            max_out / 1e3,
            combined / 1e3,
        ),
    )
}

fn soundness() -> Check {
    let mut rng = ChaCha20Rng::seed_from_u64(800);
    let g = GroupParams::random_default_256(&mut rng);
    let mut lines = Vec::new();

    let mut accepted_mutants = 0u64;
    for _ in 0..10_000 {
        let (k, r) = (g.random_scalar(&mut rng), g.random_scalar(&mut rng));
        let c = g.commit(&k, &r);
        let (dk, dr) = match rng.random_range(0..3) {
            0 => (g.random_nonzero_scalar(&mut rng), g.scalar(0)),
            1 => (g.scalar(0), g.random_nonzero_scalar(&mut rng)),
            _ => (g.random_nonzero_scalar(&mut rng), g.random_nonzero_scalar(&mut rng)),
        };
        accepted_mutants += u64::from(g.verify_opening(&c, &g.add(&k, &dk), &g.add(&r, &dr)));
    }
    lines.push(format!("mutated openings accepted {accepted_mutants}/10000"));

    let leaves: Vec<_> = (0..64).map(|_| g.commit(&g.random_scalar(&mut rng), &g.random_scalar(&mut rng))).collect();
    let tree = MerkleSchedule::build(&g, &leaves).unwrap();
    let root = tree.root();
    let mut accepted_proofs = 0u64;
    for _ in 0..10_000 {
        let j = rng.random_range(1..=64u64);
        let proof = tree.prove(j).unwrap();
        assert!(verify_position(&g, &root, &leaves[j as usize - 1], j, &proof));
        let mut bytes = proof.encode();
        let (claim, leaf) = match rng.random_range(0..3) {
            0 => {
                let bit = rng.random_range(0..bytes.len() * 8);
                bytes[bit / 8] ^= 1 << (bit % 8);
                (j, j)
            }
            1 => (j, (j - 1 + rng.random_range(1..64)) % 64 + 1),
            _ => ((j - 1 + rng.random_range(1..64)) % 64 + 1, j),
        };
        let ok = match PositionProof::decode(&bytes) {
            Ok((p, _)) => verify_position(&g, &root, &leaves[leaf as usize - 1], claim, &p),
            Err(_) => false,
        };
        accepted_proofs += u64::from(ok);
    }
    lines.push(format!("mutated proofs accepted {accepted_proofs}/10000"));

    let mut equivocations_rejected = 0u64;
    let mut equivocations = 0u64;
    for level in [ProtocolLevel::Verified, ProtocolLevel::MultiRound] {
        let cfg = DealerConfig { n: 4, rounds: 500, level, correspondents: (PlayerId(1), PlayerId(2)), rng_seed: 801 };
        let bundle = SetupBundle::generate(&g, cfg).unwrap();
        let mut agg = Aggregator::new(bundle.aggregator_view(), Variant::List);
        let mut players: Vec<_> =
            [PlayerId(1), PlayerId(2)].iter().map(|&p| dcstream::Player::from_bundle(&bundle, p, Variant::List).unwrap()).collect();
        for j in 1..=500 {
            agg.open_round(j);
            for p in players.iter_mut() {
                p.stage_message(g.random_nonzero_scalar(&mut rng)).unwrap();
                let pkt: CollectionPacket = p.emit(j).unwrap();
                assert_ne!(pkt.value, bundle.pair(pkt.sender, j).k);
                equivocations += 1;
                equivocations_rejected += u64::from(agg.ingest(&pkt) != Verdict::Accepted);
            }
            agg.finalize(j);
        }
    }
    lines.push(format!("equivocations rejected {equivocations_rejected}/{equivocations}"));

    let mut broken = 0u64;
    for _ in 0..1000 {
        let (k1, r1, k2, r2) = (g.random_scalar(&mut rng), g.random_scalar(&mut rng), g.random_scalar(&mut rng), g.random_scalar(&mut rng));
        broken += u64::from(g.combine(&g.commit(&k1, &r1), &g.commit(&k2, &r2)) != g.commit(&g.add(&k1, &k2), &g.add(&r1, &r2)));
        let n = rng.random_range(3..50);
        let mut keys: Vec<_> = (0..n - 1).map(|_| g.random_scalar(&mut rng)).collect();
        keys.push(complete_zero_sum(&g, &keys));
        broken += u64::from(!g.sum(&keys).is_zero());
    }
    lines.push(format!("homomorphism/zero-sum violations {broken}/2000"));
    ensure(accepted_mutants + accepted_proofs + equivocations_rejected + broken == 0, lines.join("; "))
}

fn determinism() -> Check {
    let cfg = SimConfig {
        n: 8,
        rounds: 2000,
        level: ProtocolLevel::MultiRound,
        variant: Variant::Optimistic,
        group: GroupChoice::Default,
        latency: LatencyModel::Lognormal { u: 0.97, s: 0.06, unit_ms: 100.0 },
        loss: LossModel::GilbertElliott { p_gb: 0.02, p_bg: 0.3, e_good: 0.0, e_bad: 0.5 },
        adversaries: vec![AdversarySpec { player: PlayerId(5), strategy: Strategy::RandomOpening }],
        transcript: true,
        rng_seed: 900,
        ..SimConfig::default()
    };
    let render = |cfg: &SimConfig| {
        let out = run_simulation(cfg, &cfg.bundle().unwrap()).unwrap();
        let mut buf = Vec::new();
        dcstream::sim::trace::write_jsonl(&mut buf, &out.rounds).unwrap();
        dcstream::protocol::transcript::write_jsonl(&mut buf, &out.events).unwrap();
        buf
    };
    let (a, b) = (render(&cfg), render(&cfg));
    let c = render(&SimConfig { rng_seed: 901, ..cfg });
    ensure(a == b && a != c, format!("{} trace bytes, identical: {}, other seed differs: {}", a.len(), a == b, a != c))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check); 8] = [
        ("correctness", correctness),
        ("fault resilience", resilience),
        ("privacy", privacy),
        ("latency model", latency),
        ("loss model", loss),
        ("bandwidth", bandwidth),
        ("crypto soundness", soundness),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t.elapsed().as_secs_f64();
        match result {
            Ok(d) => println!("PASS [{}] {name} ({secs:.1}s): {d}", i + 1),
            Err(d) => {
                failed += 1;
                println!("FAIL [{}] {name} ({secs:.1}s): {d}", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
