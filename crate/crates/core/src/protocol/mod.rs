//! Player and aggregator state machines, recovery and audits.

pub mod aggregator;
pub mod audit;
pub mod frame;
pub mod packet;
pub mod player;
pub mod transcript;

pub use aggregator::{Aggregator, RejectReason, Verdict};
pub use audit::{audit_round, RoundLog};
pub use frame::{decode_frame, encode_frame, Frame, FrameError};
pub use packet::{BroadcastPacket, CollectionPacket, WireError};
pub use player::{BlindRecovery, Player, PlayerError, Recovery};

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::group::{GroupParams, Scalar};
    use crate::schedule::SecretPair;
    use crate::setup::{BundleFile, DealerConfig, PadMaterial, SetupBundle};
    use crate::{PlayerId, ProtocolLevel, Variant};

    fn explicit(level: ProtocolLevel, ks: &[u64]) -> SetupBundle {
        let g = GroupParams::toy();
        let n = ks.len();
        let file = BundleFile {
            config: DealerConfig { n, rounds: 1, level, correspondents: (PlayerId(1), PlayerId(2)), rng_seed: 0 },
            pads: ks
                .iter()
                .map(|&k| PadMaterial::Explicit(vec![SecretPair { k: g.scalar(k), r: g.scalar(5) }]))
                .collect(),
            params: g,
        };
        SetupBundle::from_file(file).unwrap()
    }

    fn players(b: &SetupBundle) -> Vec<Player> {
        PlayerId::all(b.n()).map(|i| Player::from_bundle(b, i, Variant::List).unwrap()).collect()
    }

    #[test]
    fn equivocated_opening_toy() {
        let b = explicit(ProtocolLevel::Verified, &[2, 1, 8]);
        let mut ps = players(&b);
        ps[0].stage_message(b.params.scalar(4)).unwrap();
        let pkt = ps[0].emit(1).unwrap();
        assert_eq!(pkt.value, b.params.scalar(6));
        assert_eq!(pkt.blind, Some(b.params.scalar(4)));
        let mut agg = Aggregator::new(b.aggregator_view(), Variant::List);
        agg.open_round(1);
        assert_eq!(agg.ingest(&pkt), Verdict::Accepted);
    }

    #[test]
    fn zero_sum_full_duplex() {
        let b = explicit(ProtocolLevel::ZeroSum, &[1, 2, 8]);
        let mut ps = players(&b);
        ps[0].stage_message(b.params.scalar(4)).unwrap();
        ps[1].stage_message(b.params.scalar(7)).unwrap();
        let mut agg = Aggregator::new(b.aggregator_view(), Variant::List);
        agg.open_round(1);
        for p in ps.iter_mut() {
            assert!(agg.ingest(&p.emit(1).unwrap()).is_accepted());
        }
        let bc = agg.finalize(1);
        assert_eq!(bc.members, None);
        assert_eq!(bc.sum, Scalar::zero());
        assert_eq!(ps[1].recover(&bc), Ok(Recovery::Message(b.params.scalar(4))));
        assert_eq!(ps[0].recover(&bc), Ok(Recovery::Message(b.params.scalar(7))));
        assert_eq!(ps[2].recover(&bc), Err(PlayerError::NotCorrespondent(PlayerId(3))));
    }

    #[test]
    fn received_set_recovery() {
        let b = explicit(ProtocolLevel::LossResilient, &[3, 6, 3]);
        let mut ps = players(&b);
        ps[0].stage_message(b.params.scalar(4)).unwrap();
        let mut agg = Aggregator::new(b.aggregator_view(), Variant::List);
        agg.open_round(1);
        let lost = ps[1].emit(1).unwrap();
        agg.ingest(&ps[0].emit(1).unwrap());
        agg.ingest(&ps[2].emit(1).unwrap());
        let bc = agg.finalize(1);
        assert_eq!(bc.members, Some([PlayerId(1), PlayerId(3)].into_iter().collect()));
        assert_eq!(bc.sum, b.params.scalar(10));
        assert_eq!(ps[1].recover(&bc), Ok(Recovery::Message(b.params.scalar(4))));
        assert_eq!(ps[0].recover(&bc), Ok(Recovery::PeerAbsent));
        assert_eq!(agg.ingest(&lost), Verdict::Rejected(RejectReason::LateArrival));
    }

    #[test]
    fn own_packet_lost_still_recovers() {
        let b = explicit(ProtocolLevel::LossResilient, &[3, 6, 3]);
        let mut ps = players(&b);
        ps[0].stage_message(b.params.scalar(4)).unwrap();
        ps[1].stage_message(b.params.scalar(9)).unwrap();
        let mut agg = Aggregator::new(b.aggregator_view(), Variant::List);
        agg.open_round(1);
        agg.ingest(&ps[0].emit(1).unwrap());
        ps[1].emit(1).unwrap();
        agg.ingest(&ps[2].emit(1).unwrap());
        let bc = agg.finalize(1);
        assert_eq!(ps[1].recover(&bc), Ok(Recovery::Message(b.params.scalar(4))));
    }

    fn big_bundle(level: ProtocolLevel, n: usize, rounds: u64) -> SetupBundle {
        let cfg = DealerConfig { n, rounds, level, correspondents: (PlayerId(2), PlayerId(5)), rng_seed: 77 };
        let g = GroupParams::random_default_256(&mut ChaCha8Rng::seed_from_u64(1));
        SetupBundle::generate(&g, cfg).unwrap()
    }

    #[test]
    fn blind_recovery_finds_missing_players() {
        let b = big_bundle(ProtocolLevel::Verified, 8, 4);
        let mut ps: Vec<Player> =
            PlayerId::all(8).map(|i| Player::from_bundle(&b, i, Variant::NoList).unwrap()).collect();
        let mut agg = Aggregator::new(b.aggregator_view(), Variant::NoList);
        let audio = b"voice".to_vec();
        let cases: [&[u16]; 4] = [&[], &[7], &[3, 8], &[2]];
        for (j, lost) in (1..=4).zip(cases) {
            ps[4].stage_frame(&Frame::Audio(audio.clone())).unwrap();
            agg.open_round(j);
            for p in ps.iter_mut() {
                let pkt = p.emit(j).unwrap();
                if !lost.contains(&p.id().0) {
                    assert!(agg.ingest(&pkt).is_accepted());
                }
            }
            let bc = agg.finalize(j);
            assert!(bc.members.is_none());
            let missing: BTreeSet<PlayerId> = lost.iter().map(|&i| PlayerId(i)).collect();
            let got = ps[1].recover_without_list(&bc, 2).unwrap();
            let expect_frame = if lost.contains(&5) { Frame::Silence } else { Frame::Audio(audio.clone()) };
            match got {
                BlindRecovery::Decoded { frame, missing: m, .. } => {
                    assert_eq!(frame, expect_frame);
                    assert_eq!(m, missing);
                }
                other => panic!("round {j}: {other:?}"),
            }
            if lost.len() == 2 {
                assert!(matches!(ps[1].recover_without_list(&bc, 1), Ok(BlindRecovery::Undecodable { candidates: 0 })));
            }
        }
    }
}
